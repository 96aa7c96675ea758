#include "deepest/listen.hpp"

#include <unistd.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "deepest/checksum.hpp"
#include "deepest/error.hpp"

namespace deepest {
namespace {

using ojson = nlohmann::ordered_json;

std::string hex_ref(const std::string& system, const std::string& item) {
  const std::string key = system + "\n" + item;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "a%012llx",
                static_cast<unsigned long long>(fnv1a(key.data(), key.size()) & 0xffffffffffffULL));
  return buf;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Index into stimuli/condition_tags of a choice, -1 for "none".
int choice_slot(const TrialSpec& t, const std::string& choice) {
  const int offset = t.protocol == Protocol::kXab ? 1 : 0;
  if (choice == "A") return offset;
  if (choice == "B") return offset + 1;
  return -1;
}

void validate_value(const TrialSpec& t, const nlohmann::json& v) {
  if (t.protocol == Protocol::kMos) {
    if (!v.is_number_integer() || v.get<long>() < 1 || v.get<long>() > 5)
      fail("InvalidValue", "MOS ratings are integers 1..5, got " + v.dump());
    return;
  }
  if (!v.is_string()) fail("InvalidValue", "choice must be \"A\" or \"B\", got " + v.dump());
  const auto s = v.get<std::string>();
  if (s == "A" || s == "B") return;
  if (s == "none" && t.allow_tie) return;
  fail("InvalidValue", "choice " + v.dump() + " is not offered by trial " + t.trial_id);
}

}  // namespace

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::kMos: return "MOS";
    case Protocol::kAb: return "AB";
    case Protocol::kXab: return "XAB";
  }
  return "MOS";
}

Protocol parse_protocol(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "MOS") return Protocol::kMos;
  if (up == "AB") return Protocol::kAb;
  if (up == "XAB") return Protocol::kXab;
  fail("InvalidValue", "unknown protocol '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- catalog

void AudioCatalog::add(AudioItem item) {
  if (item.ref.empty()) item.ref = hex_ref(item.system, item.item);
  if (by_ref_.count(item.ref)) fail("DuplicateStimulus", "stimulus " + item.ref + " already listed");
  by_ref_[item.ref] = items_.size();
  items_.push_back(std::move(item));
}

const AudioItem* AudioCatalog::find(const std::string& ref) const {
  const auto it = by_ref_.find(ref);
  return it == by_ref_.end() ? nullptr : &items_[it->second];
}

const AudioItem* AudioCatalog::find(const std::string& system, const std::string& item) const {
  for (const auto& a : items_)
    if (a.system == system && a.item == item) return &a;
  return nullptr;
}

nlohmann::ordered_json AudioCatalog::to_json() const {
  ojson j = ojson::array();
  for (const auto& a : items_)
    j.push_back({{"ref", a.ref},
                 {"system", a.system},
                 {"emotion_pair", a.emotion_pair},
                 {"item", a.item},
                 {"path", a.path.string()}});
  return j;
}

AudioCatalog AudioCatalog::from_json(const nlohmann::json& j) {
  AudioCatalog c;
  try {
    for (const auto& e : j)
      c.add({e.value("ref", std::string()), e.at("system").get<std::string>(),
             e.at("emotion_pair").get<std::string>(), e.at("item").get<std::string>(),
             e.at("path").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("catalog: ") + e.what());
  }
  return c;
}

AudioCatalog catalog_from_conversions(const std::map<std::string, std::filesystem::path>& systems,
                                      const CorpusIndex& index) {
  constexpr std::string_view sep = "__to__";
  std::map<std::string, const Utterance*> by_id;
  for (const auto& u : index.utterances) by_id[u.id] = &u;
  AudioCatalog catalog;
  std::set<std::string> referenced;
  for (const auto& [name, dir] : systems) {
    if (!std::filesystem::is_directory(dir)) fail("MissingDirectory", dir.string() + " is not a directory");
    std::vector<std::filesystem::path> wavs;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.path().extension() == ".wav" && e.path().stem().string().find(sep) != std::string::npos)
        wavs.push_back(e.path());
    std::sort(wavs.begin(), wavs.end());
    for (const auto& w : wavs) {
      const std::string stem = w.stem().string();
      const auto cut = stem.rfind(sep);
      const auto src = by_id.find(stem.substr(0, cut));
      if (src == by_id.end()) continue;
      const Emotion target = parse_emotion(stem.substr(cut + sep.size()));
      const std::string tag = emotion_pair_tag(src->second->emotion, target);
      catalog.add({"", name, tag, stem, w});
      if (referenced.count(stem)) continue;
      for (const auto& u : index.utterances)
        if (u.speaker_id == src->second->speaker_id && u.emotion == target && u.text_id == src->second->text_id) {
          catalog.add({"", "reference", tag, stem, u.audio_path});
          referenced.insert(stem);
          break;
        }
    }
  }
  return catalog;
}

// ---------------------------------------------------------------- config

nlohmann::ordered_json SessionConfig::to_json() const {
  ojson j;
  j["rater_id"] = rater_id;
  j["seed"] = seed;
  j["allow_tie"] = allow_tie;
  j["blocks"] = ojson::array();
  for (const auto& b : blocks)
    j["blocks"].push_back({{"protocol", deepest::to_string(b.protocol)},
                           {"systems", b.systems},
                           {"emotion_pairs", b.emotion_pairs},
                           {"clips_per_pair", b.clips_per_pair}});
  return j;
}

SessionConfig SessionConfig::from_json(const nlohmann::json& j) {
  SessionConfig c;
  try {
    if (!j.is_object()) fail("InvalidValue", "session config must be an object");
    c.rater_id = j.value("rater_id", c.rater_id);
    c.seed = j.value("seed", c.seed);
    c.allow_tie = j.value("allow_tie", c.allow_tie);
    auto block = [](const nlohmann::json& b) {
      SessionBlock s;
      s.protocol = parse_protocol(b.value("protocol", std::string("MOS")));
      s.systems = b.value("systems", s.systems);
      s.emotion_pairs = b.value("emotion_pairs", s.emotion_pairs);
      s.clips_per_pair = b.value("clips_per_pair", s.clips_per_pair);
      if (s.clips_per_pair < 1) fail("InvalidValue", "clips_per_pair must be positive");
      return s;
    };
    if (j.contains("blocks"))
      for (const auto& b : j["blocks"]) c.blocks.push_back(block(b));
    else
      c.blocks.push_back(block(j));
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidValue", std::string("session config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- trials

nlohmann::ordered_json TrialSpec::to_json() const {
  return {{"trial_id", trial_id},         {"protocol", deepest::to_string(protocol)},
          {"stimuli", stimuli},           {"condition_tags", condition_tags},
          {"emotion_pair", emotion_pair}, {"item", item},
          {"allow_tie", allow_tie}};
}

TrialSpec TrialSpec::from_json(const nlohmann::json& j) {
  TrialSpec t;
  t.trial_id = j.at("trial_id").get<std::string>();
  t.protocol = parse_protocol(j.at("protocol").get<std::string>());
  t.stimuli = j.at("stimuli").get<std::vector<std::string>>();
  t.condition_tags = j.at("condition_tags").get<std::vector<std::string>>();
  t.emotion_pair = j.at("emotion_pair").get<std::string>();
  t.item = j.at("item").get<std::string>();
  t.allow_tie = j.value("allow_tie", false);
  return t;
}

nlohmann::ordered_json TrialSpec::public_json() const {
  static const std::vector<std::string> kMos = {"S"}, kAb = {"A", "B"}, kXab = {"X", "A", "B"};
  const auto& labels = protocol == Protocol::kMos ? kMos : protocol == Protocol::kAb ? kAb : kXab;
  ojson stim = ojson::array();
  for (std::size_t i = 0; i < stimuli.size(); ++i)
    stim.push_back({{"label", labels[i]}, {"ref", stimuli[i]}, {"url", "/audio/" + stimuli[i]}});
  ojson choices = ojson::array();
  if (protocol == Protocol::kMos) {
    choices = {1, 2, 3, 4, 5};
  } else {
    choices = {"A", "B"};
    if (allow_tie) choices.push_back("none");
  }
  return {{"trial_id", trial_id},
          {"protocol", deepest::to_string(protocol)},
          {"stimuli", stim},
          {"choices", choices}};
}

std::vector<TrialSpec> build_session(const AudioCatalog& catalog, const SessionConfig& config,
                                     const std::string& session_id) {
  std::mt19937_64 rng(config.seed);
  std::vector<TrialSpec> trials;
  for (const auto& block : config.blocks) {
    if (block.systems.empty()) continue;
    if (block.protocol != Protocol::kMos && block.systems.size() != 2)
      fail("InvalidValue", deepest::to_string(block.protocol) + " compares exactly two systems");
    std::vector<std::string> pairs = block.emotion_pairs;
    if (pairs.empty()) {
      for (const auto& a : catalog.items())
        if (std::find(pairs.begin(), pairs.end(), a.emotion_pair) == pairs.end()) pairs.push_back(a.emotion_pair);
      std::sort(pairs.begin(), pairs.end());
    }
    auto items_of = [&](const std::string& system, const std::string& pair) {
      std::vector<std::string> out;
      for (const auto& a : catalog.items())
        if (a.system == system && a.emotion_pair == pair) out.push_back(a.item);
      std::sort(out.begin(), out.end());
      return out;
    };
    auto stimulus = [&](const std::string& system, const std::string& item) {
      const AudioItem* a = catalog.find(system, item);
      if (a == nullptr) fail("MissingStimulus", "no " + system + " audio for " + item);
      if (!std::filesystem::exists(a->path)) fail("MissingStimulus", a->path.string() + " does not exist");
      return a;
    };

    std::vector<TrialSpec> block_trials;
    for (const auto& pair : pairs) {
      if (block.protocol == Protocol::kMos) {
        for (const auto& system : block.systems) {
          auto items = items_of(system, pair);
          if (static_cast<int>(items.size()) < block.clips_per_pair)
            fail("MissingStimulus", "only " + std::to_string(items.size()) + " " + system + " clips for " + pair);
          items.resize(static_cast<std::size_t>(block.clips_per_pair));
          for (const auto& item : items) {
            const AudioItem* a = stimulus(system, item);
            block_trials.push_back({"", Protocol::kMos, {a->ref}, {system}, pair, item, false});
          }
        }
        continue;
      }
      std::vector<std::string> items;
      for (const auto& item : items_of(block.systems[0], pair))
        if (catalog.find(block.systems[1], item) != nullptr) items.push_back(item);
      if (static_cast<int>(items.size()) < block.clips_per_pair)
        fail("MissingStimulus", "only " + std::to_string(items.size()) + " comparable clips for " + pair);
      items.resize(static_cast<std::size_t>(block.clips_per_pair));
      for (const auto& item : items) {
        TrialSpec t{"", block.protocol, {}, {}, pair, item, config.allow_tie};
        if (block.protocol == Protocol::kXab) {
          t.stimuli.push_back(stimulus("reference", item)->ref);
          t.condition_tags.push_back("reference");
        }
        for (const auto& system : block.systems) {
          t.stimuli.push_back(stimulus(system, item)->ref);
          t.condition_tags.push_back(system);
        }
        block_trials.push_back(std::move(t));
      }
    }
    if (block.protocol != Protocol::kMos) {
      // Half of the trials present the second system first.
      std::vector<bool> swap(block_trials.size(), false);
      for (std::size_t i = 0; i < swap.size() / 2; ++i) swap[i] = true;
      std::shuffle(swap.begin(), swap.end(), rng);
      const std::size_t a = block.protocol == Protocol::kXab ? 1 : 0;
      for (std::size_t i = 0; i < swap.size(); ++i)
        if (swap[i]) {
          std::swap(block_trials[i].stimuli[a], block_trials[i].stimuli[a + 1]);
          std::swap(block_trials[i].condition_tags[a], block_trials[i].condition_tags[a + 1]);
        }
    }
    for (auto& t : block_trials) trials.push_back(std::move(t));
  }
  std::shuffle(trials.begin(), trials.end(), rng);
  for (std::size_t i = 0; i < trials.size(); ++i) trials[i].trial_id = session_id + "-t" + std::to_string(i + 1);
  return trials;
}

// ---------------------------------------------------------------- responses

nlohmann::ordered_json TrialResponse::to_json() const {
  return {{"session_id", session_id}, {"rater_id", rater_id},     {"trial_id", trial_id},
          {"value", value},           {"elapsed_ms", elapsed_ms}, {"timestamp", timestamp}};
}

TrialResponse TrialResponse::from_json(const nlohmann::json& j) {
  TrialResponse r;
  try {
    if (!j.is_object()) fail("InvalidValue", "response must be an object");
    r.session_id = j.at("session_id").get<std::string>();
    r.rater_id = j.value("rater_id", std::string());
    r.trial_id = j.at("trial_id").get<std::string>();
    r.value = j.at("value");
    r.elapsed_ms = j.value("elapsed_ms", 0L);
    r.timestamp = j.value("timestamp", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidValue", std::string("response: ") + e.what());
  }
  return r;
}

std::string MosSummary::display() const { return fixed2(mean) + " ± " + fixed2(half_width); }

MosSummary aggregate_mos(std::span<const double> ratings) {
  if (ratings.size() < 2)
    fail("InsufficientResponses", "a confidence interval needs at least two ratings, got " +
                                      std::to_string(ratings.size()));
  MosSummary s;
  s.n = static_cast<int>(ratings.size());
  double sum = 0.0;
  for (double r : ratings) sum += r;
  s.mean = sum / s.n;
  double ss = 0.0;
  for (double r : ratings) ss += (r - s.mean) * (r - s.mean);
  const double sd = std::sqrt(ss / (s.n - 1));
  const boost::math::students_t dist(s.n - 1);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  s.half_width = t * sd / std::sqrt(static_cast<double>(s.n));
  return s;
}

PreferenceSummary aggregate_preference(const std::vector<std::string>& choices,
                                       const std::vector<std::string>& options) {
  if (choices.empty()) fail("InsufficientResponses", "no preference responses");
  std::map<std::string, int> counts;
  for (const auto& o : options) counts[o] = 0;
  for (const auto& c : choices) ++counts[c];
  PreferenceSummary s;
  s.n = static_cast<int>(choices.size());
  std::vector<std::string> order = options;
  for (const auto& [name, count] : counts)
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  for (const auto& name : order) s.percent.emplace_back(name, 100.0 * counts[name] / s.n);
  return s;
}

// ---------------------------------------------------------------- service

ListenService::ListenService(AudioCatalog catalog, std::filesystem::path data_dir, int snapshot_every)
    : catalog_(std::move(catalog)), dir_(std::move(data_dir)), snapshot_every_(std::max(1, snapshot_every)) {
  std::filesystem::create_directories(dir_);
  long from_snapshot = 0;
  if (std::ifstream in(dir_ / "snapshot.json"); in) {
    nlohmann::json snap;
    try {
      in >> snap;
    } catch (const nlohmann::json::exception& e) {
      fail("CorruptStore", (dir_ / "snapshot.json").string() + ": " + e.what());
    }
    from_snapshot = snap.value("records", 0L);
    for (const auto& s : snap.at("sessions")) apply(s);
    for (const auto& r : snap.at("responses")) apply(r);
  }
  if (std::ifstream in(dir_ / "records.jsonl"); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++records_;
      if (records_ <= from_snapshot) continue;
      nlohmann::json record;
      try {
        record = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        // A torn final line was never acknowledged.
        if (in.peek() == EOF) {
          --records_;
          break;
        }
        fail("CorruptStore", "unreadable record " + std::to_string(records_));
      }
      apply(record);
    }
  }
  log_ = std::fopen((dir_ / "records.jsonl").c_str(), "ab");
  if (log_ == nullptr) fail("WriteFailed", "cannot open " + (dir_ / "records.jsonl").string());
}

ListenService::~ListenService() {
  if (log_ != nullptr) std::fclose(log_);
}

void ListenService::apply(const nlohmann::json& record) {
  const std::string type = record.at("type").get<std::string>();
  if (type == "session") {
    Session s;
    s.id = record.at("session_id").get<std::string>();
    s.config = SessionConfig::from_json(record.at("config"));
    for (const auto& t : record.at("trials")) {
      s.trial_index[t.at("trial_id").get<std::string>()] = s.trials.size();
      s.trials.push_back(TrialSpec::from_json(t));
    }
    sessions_[s.id] = std::move(s);
  } else if (type == "response") {
    auto r = TrialResponse::from_json(record.at("response"));
    answered_[{r.rater_id, r.trial_id}] = responses_.size();
    responses_.push_back(std::move(r));
  }
}

void ListenService::append(const nlohmann::ordered_json& record) {
  const std::string line = record.dump() + "\n";
  if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
      ::fsync(fileno(log_)) != 0)
    fail("WriteFailed", "cannot append to " + (dir_ / "records.jsonl").string());
  ++records_;
}

void ListenService::commit(const nlohmann::ordered_json& record) {
  append(record);
  apply(record);
  if (records_ % snapshot_every_ == 0) write_snapshot();
}

void ListenService::write_snapshot() {
  ojson snap;
  snap["records"] = records_;
  snap["sessions"] = ojson::array();
  for (const auto& [id, s] : sessions_) {
    ojson trials = ojson::array();
    for (const auto& t : s.trials) trials.push_back(t.to_json());
    snap["sessions"].push_back({{"type", "session"}, {"session_id", id}, {"config", s.config.to_json()},
                                {"trials", trials}});
  }
  snap["responses"] = ojson::array();
  for (const auto& r : responses_) snap["responses"].push_back({{"type", "response"}, {"response", r.to_json()}});
  const auto tmp = dir_ / "snapshot.json.tmp";
  {
    std::ofstream out(tmp);
    out << snap.dump() << '\n';
    if (!out) fail("WriteFailed", "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, dir_ / "snapshot.json");
}

void ListenService::snapshot() {
  std::lock_guard lock(mutex_);
  write_snapshot();
}

const ListenService::Session& ListenService::session(const std::string& id) const {
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) fail("UnknownSession", "no session " + id);
  return it->second;
}

std::string ListenService::create_session(const SessionConfig& config) {
  std::lock_guard lock(mutex_);
  char id[16];
  std::snprintf(id, sizeof(id), "s%05zu", sessions_.size() + 1);
  const auto trials = build_session(catalog_, config, id);
  ojson record{{"type", "session"}, {"session_id", id}, {"config", config.to_json()}};
  record["trials"] = ojson::array();
  for (const auto& t : trials) record["trials"].push_back(t.to_json());
  commit(record);
  return id;
}

std::vector<TrialSpec> ListenService::trials(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  return session(session_id).trials;
}

std::optional<TrialSpec> ListenService::next_trial(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const Session& s = session(session_id);
  for (const auto& t : s.trials)
    if (!answered_.count({s.config.rater_id, t.trial_id})) return t;
  return std::nullopt;
}

std::pair<int, int> ListenService::progress(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const Session& s = session(session_id);
  int done = 0;
  for (const auto& t : s.trials) done += answered_.count({s.config.rater_id, t.trial_id}) ? 1 : 0;
  return {done, static_cast<int>(s.trials.size())};
}

void ListenService::submit(TrialResponse r) {
  std::lock_guard lock(mutex_);
  const Session& s = session(r.session_id);
  const auto it = s.trial_index.find(r.trial_id);
  if (it == s.trial_index.end()) fail("UnknownTrial", "trial " + r.trial_id + " is not part of " + r.session_id);
  if (r.rater_id.empty()) r.rater_id = s.config.rater_id;
  validate_value(s.trials[it->second], r.value);
  if (answered_.count({r.rater_id, r.trial_id}))
    fail("DuplicateResponse", "rater " + r.rater_id + " already answered " + r.trial_id);
  if (r.timestamp.empty()) r.timestamp = now_iso8601();
  const ojson record{{"type", "response"}, {"response", r.to_json()}};
  commit(record);
}

std::vector<TrialResponse> ListenService::responses() const {
  std::lock_guard lock(mutex_);
  return responses_;
}

nlohmann::ordered_json ListenService::results(Protocol protocol, const std::optional<std::string>& group) const {
  std::lock_guard lock(mutex_);
  // (emotion pair, system or system pair) -> values
  std::map<std::pair<std::string, std::string>, std::vector<double>> ratings;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> choices;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> options;
  for (const auto& r : responses_) {
    const Session& s = sessions_.at(r.session_id);
    const TrialSpec& t = s.trials[s.trial_index.at(r.trial_id)];
    if (t.protocol != protocol) continue;
    if (protocol == Protocol::kMos) {
      const std::pair key{t.emotion_pair, t.condition_tags[0]};
      if (group && *group != key.first && *group != key.second) continue;
      ratings[key].push_back(r.value.get<double>());
      continue;
    }
    const int a = protocol == Protocol::kXab ? 1 : 0;
    std::vector<std::string> systems{t.condition_tags[a], t.condition_tags[a + 1]};
    std::sort(systems.begin(), systems.end());
    const std::pair key{t.emotion_pair, systems[0] + " vs " + systems[1]};
    if (group && *group != key.first && *group != systems[0] && *group != systems[1] && *group != key.second)
      continue;
    const int slot = choice_slot(t, r.value.get<std::string>());
    choices[key].push_back(slot < 0 ? "none" : t.condition_tags[static_cast<std::size_t>(slot)]);
    auto& opts = options[key];
    if (opts.empty()) opts = systems;
    if (t.allow_tie && std::find(opts.begin(), opts.end(), "none") == opts.end()) opts.push_back("none");
  }

  ojson out{{"protocol", deepest::to_string(protocol)}, {"groups", ojson::array()}};
  if (protocol == Protocol::kMos) {
    if (group && ratings.empty()) fail("InsufficientResponses", "no MOS ratings for group " + *group);
    for (const auto& [key, values] : ratings) {
      ojson g{{"emotion_pair", key.first}, {"system", key.second}, {"n", values.size()}};
      try {
        const auto s = aggregate_mos(values);
        g["mean"] = s.mean;
        g["ci95"] = s.half_width;
        g["display"] = s.display();
      } catch (const Error& e) {
        if (group) throw;
        g["error"] = {{"code", e.code()}, {"message", e.what()}};
      }
      out["groups"].push_back(g);
    }
    return out;
  }
  if (group && choices.empty())
    fail("InsufficientResponses", "no " + deepest::to_string(protocol) + " responses for group " + *group);
  for (const auto& [key, values] : choices) {
    const auto s = aggregate_preference(values, options[key]);
    ojson pct = ojson::object();
    for (const auto& [name, p] : s.percent) pct[name] = p;
    out["groups"].push_back({{"emotion_pair", key.first}, {"systems", key.second}, {"n", s.n}, {"percent", pct}});
  }
  return out;
}

}  // namespace deepest
