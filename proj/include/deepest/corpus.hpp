#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace deepest {

enum class Emotion { kNeutral, kHappy, kSad, kAngry, kSurprise };
enum class Split { kTrain, kReference, kTest };

inline constexpr int kCorpusSampleRate = 16000;

std::string to_string(Emotion e);
std::string to_string(Split s);
// Case-insensitive; throws UnknownEmotion / UnknownSplit.
Emotion parse_emotion(std::string_view name);
Split parse_split(std::string_view name);
std::optional<Emotion> try_parse_emotion(std::string_view name);

// "N2H"-style conversion tag: first letters of source and target.
std::string emotion_pair_tag(Emotion source, Emotion target);

struct Utterance {
  std::string id;
  std::string speaker_id;
  Emotion emotion = Emotion::kNeutral;
  std::string text_id;
  std::optional<Split> split;  // unset until make_splits
  std::filesystem::path audio_path;
  int sample_rate = kCorpusSampleRate;
  double duration = 0.0;  // seconds
  std::optional<std::string> gender;
};

struct RejectedFile {
  std::filesystem::path path;
  std::string code;
  std::string message;
};

struct CorpusIndex {
  std::vector<Utterance> utterances;  // sorted (speaker, emotion, text_id)
  std::vector<std::string> speakers;  // sorted, unique
  std::vector<Emotion> emotions;      // sorted, unique
  std::string language = "en";
  std::vector<RejectedFile> rejected;  // only populated with skip_invalid
};

struct IngestOptions {
  // Explicit manifest; otherwise <root>/manifest.json if present, otherwise
  // the root/speaker/emotion/**/speaker_textid.wav convention.
  std::optional<std::filesystem::path> manifest;
  std::string language = "en";
  // Parallel-utterance count per emotion. Global file numbers above it are
  // folded back into 1..parallel_size (the released ESD numbering runs
  // 1..1750 across the five emotion folders).
  int parallel_size = 350;
  // Record unreadable / wrong-rate files in CorpusIndex::rejected instead of
  // throwing.
  bool skip_invalid = false;
};

struct SplitCounts {
  int train = 300;
  int reference = 30;
  int test = 20;
};

struct UtteranceFilter {
  std::optional<std::string> speaker;
  std::optional<Emotion> emotion;
  std::optional<Split> split;
};

CorpusIndex ingest(const std::filesystem::path& root, const IngestOptions& options = {});

// Per (speaker, emotion), ascending text_id: the first `train` ids go to train,
// the next `reference` to reference, the last `test` to test. Surplus
// utterances (more than the three counts add up to) are absorbed by train so
// every utterance keeps exactly one split.
CorpusIndex make_splits(const CorpusIndex& index, const SplitCounts& counts = {});

std::vector<Utterance> select(const CorpusIndex& index, const UtteranceFilter& filter = {});

// Total order used everywhere utterances are listed.
bool utterance_less(const Utterance& a, const Utterance& b);
// Numeric when both ids are integers, lexicographic otherwise.
bool text_id_less(const std::string& a, const std::string& b);

nlohmann::ordered_json to_json(const Utterance& u);
Utterance utterance_from_json(const nlohmann::json& j);

nlohmann::ordered_json manifest_json(const CorpusIndex& index);
void write_manifest(const std::filesystem::path& path, const CorpusIndex& index);
// Loads a manifest written by write_manifest without touching the audio.
CorpusIndex read_manifest(const std::filesystem::path& path);

// Recomputes speakers/emotions and re-sorts utterances.
void finalize_index(CorpusIndex& index);

}  // namespace deepest
