#include "deepest/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "deepest/error.hpp"
#include "deepest/wav.hpp"

namespace fs = std::filesystem;

namespace deepest {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<long> as_integer(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::map<std::string, std::string> read_speaker_info(const fs::path& root) {
  std::map<std::string, std::string> genders;
  std::ifstream in(root / "speaker_info.txt");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string speaker, gender;
    if (ss >> speaker >> gender) genders[speaker] = lower(gender);
  }
  return genders;
}

// Validates one audio file; returns its duration in seconds.
double check_audio(const fs::path& path) {
  if (!fs::exists(path)) fail("UnreadableAudio", path.string() + ": file does not exist");
  const WavInfo info = probe_wav(path);
  if (info.bits_per_sample != 16 || info.channels != 1)
    fail("UnreadableAudio", path.string() + ": expected 16-bit mono PCM");
  if (info.sample_rate != kCorpusSampleRate)
    fail("SampleRateMismatch", path.string() + ": found " + std::to_string(info.sample_rate) +
                                   " Hz, expected 16000 Hz");
  if (info.frames == 0) fail("UnreadableAudio", path.string() + ": no samples");
  return static_cast<double>(info.frames) / info.sample_rate;
}

std::string text_id_from_stem(const std::string& stem, int parallel_size) {
  const auto underscore = stem.rfind('_');
  const std::string tail = underscore == std::string::npos ? stem : stem.substr(underscore + 1);
  if (auto n = as_integer(tail); n && *n > 0) {
    const long folded = parallel_size > 0 ? ((*n - 1) % parallel_size) + 1 : *n;
    return std::to_string(folded);
  }
  return tail;
}

void check_unique(const CorpusIndex& index) {
  std::set<std::tuple<std::string, Emotion, std::string>> seen;
  std::set<std::string> ids;
  for (const auto& u : index.utterances) {
    if (!ids.insert(u.id).second) fail("DuplicateUtterance", "duplicate utterance id " + u.id);
    if (!seen.emplace(u.speaker_id, u.emotion, u.text_id).second)
      fail("DuplicateUtterance", "duplicate (speaker, emotion, text_id) = (" + u.speaker_id +
                                     ", " + to_string(u.emotion) + ", " + u.text_id + ")");
  }
}

// Runs `body`; with skip_invalid, audio errors are recorded instead of thrown.
template <typename F>
void guarded(CorpusIndex& index, const IngestOptions& opt, const fs::path& path, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    if (!opt.skip_invalid || (e.code() != "UnreadableAudio" && e.code() != "SampleRateMismatch"))
      throw;
    index.rejected.push_back({path, e.code(), e.what()});
  }
}

CorpusIndex ingest_manifest(const fs::path& root, const fs::path& manifest,
                            const IngestOptions& opt) {
  std::ifstream in(manifest);
  if (!in) fail("MissingManifest", "cannot open manifest " + manifest.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidManifest", manifest.string() + ": " + e.what());
  }
  if (!doc.is_array()) fail("InvalidManifest", manifest.string() + ": expected a JSON array");

  CorpusIndex index;
  index.language = opt.language;
  for (const auto& record : doc) {
    Utterance u = utterance_from_json(record);
    if (u.audio_path.is_relative()) u.audio_path = root / u.audio_path;
    guarded(index, opt, u.audio_path, [&] {
      u.duration = check_audio(u.audio_path);
      u.sample_rate = kCorpusSampleRate;
      index.utterances.push_back(u);
    });
  }
  return index;
}

CorpusIndex ingest_convention(const fs::path& root, const IngestOptions& opt) {
  const auto genders = read_speaker_info(root);
  CorpusIndex index;
  index.language = opt.language;

  std::vector<fs::path> speaker_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) speaker_dirs.push_back(entry.path());
  std::sort(speaker_dirs.begin(), speaker_dirs.end());

  for (const auto& speaker_dir : speaker_dirs) {
    const std::string speaker = speaker_dir.filename().string();
    std::vector<fs::path> emotion_dirs;
    for (const auto& entry : fs::directory_iterator(speaker_dir))
      if (entry.is_directory()) emotion_dirs.push_back(entry.path());
    std::sort(emotion_dirs.begin(), emotion_dirs.end());

    for (const auto& emotion_dir : emotion_dirs) {
      const auto emotion = try_parse_emotion(emotion_dir.filename().string());
      if (!emotion) continue;
      std::vector<fs::path> files;
      for (const auto& entry : fs::recursive_directory_iterator(emotion_dir))
        if (entry.is_regular_file() && lower(entry.path().extension().string()) == ".wav")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files) {
        guarded(index, opt, file, [&] {
          Utterance u;
          u.id = file.stem().string();
          u.speaker_id = speaker;
          u.emotion = *emotion;
          u.text_id = text_id_from_stem(u.id, opt.parallel_size);
          u.audio_path = file;
          u.duration = check_audio(file);
          if (auto g = genders.find(speaker); g != genders.end()) u.gender = g->second;
          index.utterances.push_back(std::move(u));
        });
      }
    }
  }
  return index;
}

}  // namespace

std::string to_string(Emotion e) {
  switch (e) {
    case Emotion::kNeutral: return "neutral";
    case Emotion::kHappy: return "happy";
    case Emotion::kSad: return "sad";
    case Emotion::kAngry: return "angry";
    case Emotion::kSurprise: return "surprise";
  }
  return "?";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kReference: return "reference";
    case Split::kTest: return "test";
  }
  return "?";
}

std::optional<Emotion> try_parse_emotion(std::string_view name) {
  const std::string n = lower(name);
  if (n == "neutral") return Emotion::kNeutral;
  if (n == "happy") return Emotion::kHappy;
  if (n == "sad") return Emotion::kSad;
  if (n == "angry") return Emotion::kAngry;
  if (n == "surprise") return Emotion::kSurprise;
  return std::nullopt;
}

Emotion parse_emotion(std::string_view name) {
  if (auto e = try_parse_emotion(name)) return *e;
  fail("UnknownEmotion", "unknown emotion label '" + std::string(name) + "'");
}

Split parse_split(std::string_view name) {
  const std::string n = lower(name);
  if (n == "train") return Split::kTrain;
  if (n == "reference") return Split::kReference;
  if (n == "test") return Split::kTest;
  fail("UnknownSplit", "unknown split '" + std::string(name) + "'");
}

std::string emotion_pair_tag(Emotion source, Emotion target) {
  auto letter = [](Emotion e) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(to_string(e)[0])));
  };
  return std::string{letter(source), '2', letter(target)};
}

bool text_id_less(const std::string& a, const std::string& b) {
  const auto na = as_integer(a);
  const auto nb = as_integer(b);
  if (na && nb) return *na < *nb;
  if (na != nb) return static_cast<bool>(na);  // numeric ids sort first
  return a < b;
}

bool utterance_less(const Utterance& a, const Utterance& b) {
  if (a.speaker_id != b.speaker_id) return a.speaker_id < b.speaker_id;
  if (a.emotion != b.emotion) return a.emotion < b.emotion;
  if (a.text_id != b.text_id) return text_id_less(a.text_id, b.text_id);
  return a.id < b.id;
}

void finalize_index(CorpusIndex& index) {
  std::stable_sort(index.utterances.begin(), index.utterances.end(), utterance_less);
  std::set<std::string> speakers;
  std::set<Emotion> emotions;
  for (const auto& u : index.utterances) {
    speakers.insert(u.speaker_id);
    emotions.insert(u.emotion);
  }
  index.speakers.assign(speakers.begin(), speakers.end());
  index.emotions.assign(emotions.begin(), emotions.end());
}

CorpusIndex ingest(const fs::path& root, const IngestOptions& options) {
  if (!fs::is_directory(root)) fail("MissingDirectory", "corpus root " + root.string() +
                                                            " does not exist");
  const fs::path abs_root = fs::weakly_canonical(fs::absolute(root));
  std::optional<fs::path> manifest = options.manifest;
  if (!manifest && fs::exists(abs_root / "manifest.json")) manifest = abs_root / "manifest.json";

  CorpusIndex index = manifest ? ingest_manifest(abs_root, *manifest, options)
                               : ingest_convention(abs_root, options);
  finalize_index(index);
  check_unique(index);
  return index;
}

CorpusIndex make_splits(const CorpusIndex& index, const SplitCounts& counts) {
  if (counts.train < 0 || counts.reference < 0 || counts.test < 0)
    fail("InvalidSplitCounts", "split counts must be non-negative");
  CorpusIndex out = index;
  finalize_index(out);

  std::map<std::pair<std::string, Emotion>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < out.utterances.size(); ++i)
    groups[{out.utterances[i].speaker_id, out.utterances[i].emotion}].push_back(i);

  const int need = counts.train + counts.reference + counts.test;
  for (const auto& [key, members] : groups) {
    const int have = static_cast<int>(members.size());
    if (have < need)
      fail("InsufficientUtterances", "speaker " + key.first + ", emotion " +
                                         to_string(key.second) + ": have " +
                                         std::to_string(have) + ", need " + std::to_string(need));
    // members are already in ascending text_id order.
    const int train_end = have - counts.reference - counts.test;
    const int reference_end = train_end + counts.reference;
    for (int r = 0; r < have; ++r) {
      Split s = r < train_end ? Split::kTrain : r < reference_end ? Split::kReference : Split::kTest;
      out.utterances[members[static_cast<std::size_t>(r)]].split = s;
    }
  }
  return out;
}

std::vector<Utterance> select(const CorpusIndex& index, const UtteranceFilter& filter) {
  std::vector<Utterance> out;
  for (const auto& u : index.utterances) {
    if (filter.speaker && u.speaker_id != *filter.speaker) continue;
    if (filter.emotion && u.emotion != *filter.emotion) continue;
    if (filter.split && u.split != filter.split) continue;
    out.push_back(u);
  }
  std::stable_sort(out.begin(), out.end(), utterance_less);
  return out;
}

nlohmann::ordered_json to_json(const Utterance& u) {
  nlohmann::ordered_json j;
  j["id"] = u.id;
  j["speaker_id"] = u.speaker_id;
  j["emotion"] = to_string(u.emotion);
  j["text_id"] = u.text_id;
  j["split"] = u.split ? nlohmann::ordered_json(to_string(*u.split)) : nlohmann::ordered_json();
  j["audio_path"] = u.audio_path.string();
  j["sample_rate"] = u.sample_rate;
  j["duration"] = u.duration;
  if (u.gender) j["gender"] = *u.gender;
  return j;
}

Utterance utterance_from_json(const nlohmann::json& j) {
  try {
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.speaker_id = j.at("speaker_id").get<std::string>();
    u.emotion = parse_emotion(j.at("emotion").get<std::string>());
    const auto& t = j.at("text_id");
    u.text_id = t.is_string() ? t.get<std::string>() : std::to_string(t.get<long>());
    if (j.contains("split") && !j["split"].is_null())
      u.split = parse_split(j["split"].get<std::string>());
    u.audio_path = j.at("audio_path").get<std::string>();
    u.sample_rate = j.value("sample_rate", kCorpusSampleRate);
    u.duration = j.value("duration", 0.0);
    if (j.contains("gender") && j["gender"].is_string()) u.gender = j["gender"].get<std::string>();
    return u;
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidManifest", std::string("bad utterance record: ") + e.what());
  }
}

nlohmann::ordered_json manifest_json(const CorpusIndex& index) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& u : index.utterances) arr.push_back(to_json(u));
  return arr;
}

void write_manifest(const fs::path& path, const CorpusIndex& index) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail("IoError", "cannot write " + path.string());
  out << manifest_json(index).dump(2) << '\n';
}

CorpusIndex read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail("MissingManifest", "cannot open manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidManifest", path.string() + ": " + e.what());
  }
  if (!doc.is_array()) fail("InvalidManifest", path.string() + ": expected a JSON array");
  CorpusIndex index;
  for (const auto& record : doc) {
    Utterance u = utterance_from_json(record);
    if (u.audio_path.is_relative() && path.has_parent_path())
      u.audio_path = path.parent_path() / u.audio_path;
    index.utterances.push_back(std::move(u));
  }
  finalize_index(index);
  return index;
}

}  // namespace deepest
