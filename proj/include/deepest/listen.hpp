#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepest/corpus.hpp"

// Subjective evaluation backend: MOS, AB and XAB sessions over converted and
// reference audio, durable response collection and aggregation.
namespace deepest {

enum class Protocol { kMos, kAb, kXab };
std::string to_string(Protocol p);
Protocol parse_protocol(std::string_view name);  // throws InvalidValue

// One playable file. Raters only ever see `ref`.
struct AudioItem {
  std::string ref;
  std::string system;        // "reference" for natural target recordings
  std::string emotion_pair;  // e.g. "N2H"
  std::string item;          // stimuli of one item share source text and target
  std::filesystem::path path;
};

class AudioCatalog {
 public:
  void add(AudioItem item);  // ref defaults to a hash of (system, item)
  const AudioItem* find(const std::string& ref) const;
  const AudioItem* find(const std::string& system, const std::string& item) const;
  const std::vector<AudioItem>& items() const { return items_; }
  nlohmann::ordered_json to_json() const;
  static AudioCatalog from_json(const nlohmann::json& j);

 private:
  std::vector<AudioItem> items_;
  std::map<std::string, std::size_t> by_ref_;
};

// Every "<source>__to__<emotion>.wav" of each system directory, plus the
// parallel target recording of each item as system "reference".
AudioCatalog catalog_from_conversions(const std::map<std::string, std::filesystem::path>& systems,
                                      const CorpusIndex& index);

struct SessionBlock {
  Protocol protocol = Protocol::kMos;
  std::vector<std::string> systems;        // AB and XAB need exactly two
  std::vector<std::string> emotion_pairs;  // empty: every pair in the catalog
  int clips_per_pair = 18;
};

struct SessionConfig {
  std::string rater_id = "anonymous";
  std::uint64_t seed = 1;
  bool allow_tie = false;  // adds a "no preference" choice to AB and XAB
  std::vector<SessionBlock> blocks;

  nlohmann::ordered_json to_json() const;
  // Accepts {"blocks": [...]} or a single block's fields at top level.
  static SessionConfig from_json(const nlohmann::json& j);
};

struct TrialSpec {
  std::string trial_id;
  Protocol protocol = Protocol::kMos;
  std::vector<std::string> stimuli;         // MOS: S; AB: A, B; XAB: X, A, B
  std::vector<std::string> condition_tags;  // hidden system per stimulus
  std::string emotion_pair;
  std::string item;
  bool allow_tie = false;

  nlohmann::ordered_json to_json() const;  // includes the hidden tags
  static TrialSpec from_json(const nlohmann::json& j);
  // What a rater's client receives: labels and audio URLs only.
  nlohmann::ordered_json public_json() const;
};

// Seeded trial list: items per (pair, system) in sorted order, the AB/XAB
// presentation order balanced within each block, then a global shuffle.
// Throws MissingStimulus when a selected file is absent on disk.
std::vector<TrialSpec> build_session(const AudioCatalog& catalog, const SessionConfig& config,
                                     const std::string& session_id);

struct TrialResponse {
  std::string session_id;
  std::string rater_id;
  std::string trial_id;
  nlohmann::json value;  // MOS: integer 1..5; AB/XAB: "A", "B" or "none"
  long elapsed_ms = 0;
  std::string timestamp;  // ISO 8601, filled in on receipt when empty

  nlohmann::ordered_json to_json() const;
  static TrialResponse from_json(const nlohmann::json& j);  // throws InvalidValue
};

struct MosSummary {
  int n = 0;
  double mean = 0.0;
  double half_width = 0.0;  // t_{0.975, n-1} * s / sqrt(n)
  std::string display() const;  // "3.24 ± 0.72"
};

// Throws InsufficientResponses for fewer than two ratings.
MosSummary aggregate_mos(std::span<const double> ratings);

struct PreferenceSummary {
  int n = 0;
  std::vector<std::pair<std::string, double>> percent;  // per option, sums to 100
};

// `choices` hold de-randomised options (system names or "none"). Options
// listed in `options` are reported even when never chosen. Throws
// InsufficientResponses when empty.
PreferenceSummary aggregate_preference(const std::vector<std::string>& choices,
                                       const std::vector<std::string>& options);

// Session state over an append-only JSONL record log plus a periodic
// snapshot in `data_dir`. All members are safe to call concurrently.
class ListenService {
 public:
  ListenService(AudioCatalog catalog, std::filesystem::path data_dir, int snapshot_every = 100);
  ~ListenService();
  ListenService(const ListenService&) = delete;
  ListenService& operator=(const ListenService&) = delete;

  const AudioCatalog& catalog() const { return catalog_; }

  // Returns the new session id.
  std::string create_session(const SessionConfig& config);
  std::vector<TrialSpec> trials(const std::string& session_id) const;  // throws UnknownSession
  // First trial of the session without a response from its rater.
  std::optional<TrialSpec> next_trial(const std::string& session_id) const;
  std::pair<int, int> progress(const std::string& session_id) const;  // (answered, total)

  // Throws UnknownSession, UnknownTrial, InvalidValue, DuplicateResponse.
  void submit(TrialResponse response);
  std::vector<TrialResponse> responses() const;

  // Aggregates per (emotion pair, system) for MOS and per (emotion pair,
  // system pair) for AB/XAB. `group` keeps groups whose emotion pair or a
  // system equals it; a named group without enough responses throws
  // InsufficientResponses.
  nlohmann::ordered_json results(Protocol protocol, const std::optional<std::string>& group) const;

  void snapshot();

 private:
  struct Session {
    std::string id;
    SessionConfig config;
    std::vector<TrialSpec> trials;
    std::map<std::string, std::size_t> trial_index;
  };

  void append(const nlohmann::ordered_json& record);
  void commit(const nlohmann::ordered_json& record);  // append, apply, maybe snapshot
  void apply(const nlohmann::json& record);
  void write_snapshot();
  const Session& session(const std::string& id) const;

  AudioCatalog catalog_;
  std::filesystem::path dir_;
  int snapshot_every_;
  mutable std::mutex mutex_;
  std::FILE* log_ = nullptr;
  long records_ = 0;
  std::map<std::string, Session> sessions_;
  std::vector<TrialResponse> responses_;
  std::map<std::pair<std::string, std::string>, std::size_t> answered_;  // (rater, trial)
};

// HTTP+JSON front end. Errors are returned as {"code", "message"}.
class ListenServer {
 public:
  explicit ListenServer(ListenService& service);
  ~ListenServer();
  // Binds and serves until stop(); port 0 picks a free port.
  bool bind(const std::string& host, int port);
  int port() const { return port_; }
  void serve();  // blocking
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace deepest
