#include "deepest/cli.hpp"

#include <pthread.h>

#include <CLI11.hpp>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <thread>

#include "deepest/checksum.hpp"
#include "deepest/convert.hpp"
#include "deepest/corpus.hpp"
#include "deepest/error.hpp"
#include "deepest/evaluate.hpp"
#include "deepest/feature_cache.hpp"
#include "deepest/listen.hpp"
#include "deepest/pipeline.hpp"
#include "deepest/ser.hpp"
#include "deepest/toy_corpus.hpp"
#include "deepest/vawgan.hpp"
#include "deepest/wav.hpp"

namespace deepest {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const std::vector<std::string> kCommands = {"prepare",  "featurize", "train-ser",    "embed",     "train-vc",
                                            "convert",  "evaluate",  "listen-serve", "toy-corpus"};

// Every option of every command; unused ones keep their defaults.
struct Args {
  std::optional<std::uint64_t> seed;
  std::string config;

  std::string root, out, manifest, input_manifest, cache, ckpt, ser, audio, converted, data;
  std::string splits = "300,30,20";
  std::string language = "en";
  int parallel_size = 350;
  bool skip_invalid = false;
  std::string split;  // featurize filter

  std::optional<int> epochs, vae_epochs, batch, n_critic;
  std::optional<double> lr;
  std::string train_split = "train";
  std::string validation_split = "reference";
  std::string emotions;

  std::string source_split = "test";
  std::string source_emotion = "neutral";
  std::string target_emotion = "happy";
  std::string refs = "reference";
  std::string stats_split = "train";
  std::string speaker;

  std::optional<double> perplexity;
  std::optional<int> iterations;
  int tsne_texts = 20;

  std::vector<std::string> systems;
  std::string host = "127.0.0.1";
  int port = 8080;
  int snapshot_every = 100;
  bool check = false;

  int clips = 50;
  double seconds = 0.4;
  int speakers = 2;
};

std::string replace_all(std::string s, char from, char to) {
  std::replace(s.begin(), s.end(), from, to);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty() || !parts.empty()) parts.push_back(cur);
  return parts;
}

// Converts a library parse failure of a flag value into InvalidFlag.
template <typename Fn>
auto flag_value(const std::string& flag, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    fail("InvalidFlag", "--" + flag + ": " + e.what());
  }
}

Emotion emotion_flag(const std::string& flag, const std::string& v) {
  return flag_value(flag, [&] { return parse_emotion(v); });
}

Split split_flag(const std::string& flag, const std::string& v) {
  return flag_value(flag, [&] { return parse_split(v); });
}

std::vector<Emotion> emotion_list(const std::string& flag, const std::string& v) {
  std::vector<Emotion> out;
  for (const auto& e : split_list(v)) out.push_back(emotion_flag(flag, e));
  if (out.empty()) fail("InvalidFlag", "--" + flag + " lists no emotions");
  return out;
}

SplitCounts split_counts(const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 3) fail("InvalidFlag", "--splits expects train,reference,test counts, got '" + v + "'");
  std::array<int, 3> n{};
  for (int i = 0; i < 3; ++i) {
    try {
      std::size_t used = 0;
      n[i] = std::stoi(parts[i], &used);
      if (used != parts[i].size() || n[i] < 0) throw std::invalid_argument(parts[i]);
    } catch (const std::exception&) {
      fail("InvalidFlag", "--splits expects non-negative integers, got '" + v + "'");
    }
  }
  return {n[0], n[1], n[2]};
}

// Explicit flag, then DEEPEST_CACHE, then none.
CacheDir resolve_cache(const std::string& flag) {
  if (!flag.empty()) return fs::path(flag);
  if (const char* env = std::getenv("DEEPEST_CACHE"); env != nullptr && *env != '\0') return fs::path(env);
  return std::nullopt;
}

std::string scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ",") + scalar_text(e);
    return s;
  }
  if (v.is_number()) return v.dump();
  fail("InvalidConfig", "config value " + v.dump() + " is not a scalar or list");
}

nlohmann::json read_json_file(const fs::path& path, const std::string& code) {
  std::ifstream in(path);
  if (!in) fail(code, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(code, path.string() + ": " + e.what());
  }
}

std::optional<std::string> flag_in(const std::vector<std::string>& args, const std::string& name) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == name && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(name + "=", 0) == 0) return args[i].substr(name.size() + 1);
  }
  return std::nullopt;
}

bool user_gave(const std::vector<std::string>& args, const std::string& name) {
  for (const auto& a : args)
    if (a == name || a.rfind(name + "=", 0) == 0) return true;
  return false;
}

// Config keys naming an option of `sub` become its value unless the user
// passed that flag; the remaining keys are returned for the stage parsers.
nlohmann::json apply_config(CLI::App& sub, const std::string& command, const std::vector<std::string>& user,
                            std::vector<std::string>& tokens) {
  nlohmann::json rest = nlohmann::json::object();
  const auto path = flag_in(user, "--config");
  if (!path) return rest;
  nlohmann::json cfg = read_json_file(*path, "InvalidConfig");
  if (!cfg.is_object()) fail("InvalidConfig", *path + " must hold a JSON object");
  if (cfg.contains(command) && cfg[command].is_object()) cfg = cfg[command];
  for (const auto& [key, value] : cfg.items()) {
    const std::string name = "--" + replace_all(key, '_', '-');
    if (name == "--config") fail("InvalidConfig", "a config file cannot name another config file");
    CLI::Option* opt = sub.get_option_no_throw(name);
    if (opt == nullptr) {
      rest[key] = value;
      continue;
    }
    if (user_gave(user, name)) continue;
    if (opt->get_type_size() == 0) {
      if (!value.is_boolean()) fail("InvalidConfig", "config key '" + key + "' is a switch and takes true/false");
      if (value.get<bool>()) tokens.push_back(name);
    } else if (value.is_array() && opt->get_items_expected_max() > 1) {
      for (const auto& v : value) {
        tokens.push_back(name);
        tokens.push_back(scalar_text(v));
      }
    } else {
      tokens.push_back(name);
      tokens.push_back(scalar_text(value));
    }
  }
  return rest;
}

void require_no_extra(const nlohmann::json& rest, const std::string& command) {
  if (!rest.empty())
    fail("InvalidConfig", "config key '" + rest.begin().key() + "' is not an option of " + command);
}

void emit(std::ostream& out, const ojson& summary) { out << summary.dump() << std::endl; }

std::vector<std::string> emotion_names(const std::vector<Emotion>& es) {
  std::vector<std::string> out;
  for (Emotion e : es) out.push_back(to_string(e));
  return out;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------- commands

int cmd_toy_corpus(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "toy-corpus");
  ToyCorpusOptions o;
  if (a.speakers < 1 || a.speakers > static_cast<int>(o.speakers.size()))
    fail("InvalidFlag", "--speakers must be 1 or 2");
  if (a.clips < 1) fail("InvalidFlag", "--clips must be positive");
  if (!(a.seconds > 0.0)) fail("InvalidFlag", "--seconds must be positive");
  o.speakers.resize(a.speakers);
  o.clips_per_emotion = a.clips;
  o.clip_seconds = a.seconds;
  o.seed = a.seed.value_or(1);
  if (!a.emotions.empty()) o.emotions = emotion_list("emotions", a.emotions);
  const auto index = write_toy_corpus(a.out, o);
  emit(out, {{"command", "toy-corpus"},
             {"root", a.out},
             {"utterances", index.utterances.size()},
             {"speakers", index.speakers},
             {"emotions", emotion_names(index.emotions)}});
  return 0;
}

int cmd_prepare(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "prepare");
  IngestOptions io;
  if (!a.input_manifest.empty()) io.manifest = a.input_manifest;
  io.language = a.language;
  io.parallel_size = a.parallel_size;
  io.skip_invalid = a.skip_invalid;
  const SplitCounts counts = split_counts(a.splits);
  const CorpusIndex index = make_splits(ingest(a.root, io), counts);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_manifest(a.out, index);
  std::map<std::string, int> per_split;
  for (const auto& u : index.utterances) ++per_split[u.split ? to_string(*u.split) : "none"];
  ojson rejected = ojson::array();
  for (const auto& r : index.rejected) rejected.push_back({{"path", r.path.string()}, {"code", r.code}});
  emit(out, {{"command", "prepare"},
             {"manifest", a.out},
             {"utterances", index.utterances.size()},
             {"speakers", index.speakers},
             {"emotions", emotion_names(index.emotions)},
             {"splits", per_split},
             {"rejected", rejected}});
  return 0;
}

std::vector<Utterance> manifest_utterances(const CorpusIndex& index, const std::string& split) {
  if (split.empty()) return index.utterances;
  return select(index, {std::nullopt, std::nullopt, split_flag("split", split)});
}

int cmd_featurize(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "featurize");
  const CacheDir cache = resolve_cache(a.cache);
  if (!cache) fail("InvalidFlag", "--cache is required unless DEEPEST_CACHE is set");
  const CorpusIndex index = read_manifest(a.manifest);
  fs::create_directories(*cache);
  long frames = 0;
  std::size_t computed = 0;
  const auto utts = manifest_utterances(index, a.split);
  for (const auto& u : utts) {
    if (!fs::exists(feature_cache_path(*cache, u.id))) ++computed;
    frames += static_cast<long>(utterance_features(u, cache).f0.size());
  }
  emit(out, {{"command", "featurize"},
             {"cache", cache->string()},
             {"utterances", utts.size()},
             {"computed", computed},
             {"frames", frames}});
  return 0;
}

int cmd_train_ser(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  SerConfig c = SerConfig::from_json(rest);
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch) c.batch_size = *a.batch;
  if (a.lr) c.learning_rate = *a.lr;
  if (a.seed) c.seed = *a.seed;
  const CorpusIndex index = read_manifest(a.manifest);
  const auto train = load_clips(select(index, {std::nullopt, std::nullopt, split_flag("train-split", a.train_split)}));
  std::vector<LabeledClip> validation;
  if (a.validation_split != "none")
    validation = load_clips(select(index, {std::nullopt, std::nullopt, split_flag("validation-split", a.validation_split)}));
  const SerModel model = train_ser(train, validation, c);
  model.save(a.out);
  ojson summary{{"command", "train-ser"},
                {"checkpoint", a.out},
                {"classes", emotion_names(model.classes())},
                {"train_clips", train.size()},
                {"validation_clips", validation.size()},
                {"epochs", model.history().size()},
                {"checksum", hex(model.checksum())}};
  if (!model.history().empty()) {
    summary["train_accuracy"] = model.history().back().train_accuracy;
    if (model.history().back().validation_accuracy)
      summary["validation_accuracy"] = *model.history().back().validation_accuracy;
  }
  emit(out, summary);
  return 0;
}

int cmd_embed(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "embed");
  const SerModel model = SerModel::load(a.ckpt);
  const Wav wav = read_wav(a.audio);
  if (wav.sample_rate != model.config().mel.sample_rate)
    fail("SampleRateMismatch", a.audio + " is " + std::to_string(wav.sample_rate) + " Hz, the model expects " +
                                   std::to_string(model.config().mel.sample_rate));
  const EmotionEmbedding e = model.embed(wav.samples);
  const Vector p = model.classify(wav.samples);
  ojson probs = ojson::object();
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    probs[to_string(model.classes()[i])] = p[i];
    if (p[i] > p[best]) best = i;
  }
  const std::vector<double> phi(e.phi.data(), e.phi.data() + e.phi.size());
  ojson doc{{"audio", a.audio},
            {"dim", phi.size()},
            {"checksum", hex(checksum(e.phi))},
            {"predicted", to_string(model.classes()[best])},
            {"probabilities", probs},
            {"phi", phi}};
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  std::ofstream f(a.out);
  f << doc.dump(2) << '\n';
  if (!f) fail("WriteFailed", "cannot write " + a.out);
  emit(out, {{"command", "embed"}, {"out", a.out}, {"dim", phi.size()}, {"predicted", doc["predicted"]},
             {"checksum", doc["checksum"]}});
  return 0;
}

int cmd_train_vc(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  VcTrainConfig tc = VcTrainConfig::from_json(rest, VcTrainConfig{});
  const VcArch arch = rest.contains("arch") ? VcArch::from_json(rest["arch"]) : VcArch{};
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.vae_epochs) tc.vae_epochs = *a.vae_epochs;
  if (a.batch) tc.batch_size = *a.batch;
  if (a.lr) tc.learning_rate = *a.lr;
  if (a.n_critic) tc.n_critic = *a.n_critic;
  if (a.seed) tc.seed = *a.seed;
  // Re-run the range checks on the merged values.
  tc = VcTrainConfig::from_json(tc.to_json());

  const CorpusIndex index = read_manifest(a.manifest);
  const auto wanted = emotion_list("emotions", a.emotions.empty() ? "neutral,happy,sad" : a.emotions);
  std::vector<Utterance> utts;
  for (const auto& u : select(index, {std::nullopt, std::nullopt, Split::kTrain}))
    if (std::find(wanted.begin(), wanted.end(), u.emotion) != wanted.end()) utts.push_back(u);
  const SerModel ser = SerModel::load(a.ser);
  const VcTrainingData data = vc_training_data(utts, ser, resolve_cache(a.cache));
  const VcModel vc = train_vc(data, tc, arch);
  vc.save(a.out);
  const auto& log = vc.training_log();
  emit(out, {{"command", "train-vc"},
             {"checkpoint", a.out},
             {"header", training_log_header(tc)},
             {"utterances", data.utterances()},
             {"frames", data.frames()},
             {"seen_emotions", emotion_names(vc.seen_emotions())},
             {"epochs", log.size()},
             {"final_recon", log.empty() ? 0.0 : log.back().recon},
             {"checksum", hex(vc.checksum())}});
  return 0;
}

int cmd_convert(const Args& a, const nlohmann::json& rest, std::ostream& out, std::ostream& err) {
  require_no_extra(rest, "convert");
  const CorpusIndex index = read_manifest(a.manifest);
  const VcModel vc = VcModel::load(a.ckpt);
  const SerModel ser = SerModel::load(a.ser);
  ConversionPlan plan;
  plan.target_emotion = emotion_flag("target-emotion", a.target_emotion);
  plan.source_emotion = emotion_flag("source-emotion", a.source_emotion);
  plan.source_split = split_flag("source-split", a.source_split);
  plan.reference_split = split_flag("refs", a.refs);
  plan.statistics_split = split_flag("stats-split", a.stats_split);
  if (!a.speaker.empty()) plan.speaker = a.speaker;
  const auto requests = plan_conversions(index, plan, vc, ser, resolve_cache(a.cache));
  const ConversionManifest m = batch_convert(requests, a.out);
  ojson checksums = ojson::object();
  for (const auto& o : m.outputs) checksums[o.wav.filename().string()] = hex(o.waveform_checksum);
  emit(out, {{"command", "convert"},
             {"out", a.out},
             {"target_emotion", to_string(plan.target_emotion)},
             {"converted", m.outputs.size()},
             {"failed", m.errors.size()},
             {"waveform_checksums", checksums}});
  if (m.errors.empty()) return 0;
  err << ojson{{"error", "ConversionFailed"},
               {"message", std::to_string(m.errors.size()) + " of " + std::to_string(requests.size()) +
                               " conversions failed, first: " + m.errors.front().code + ": " + m.errors.front().message}}
             .dump()
      << std::endl;
  return 1;
}

// Fig. 1 protocol: per speaker, the first `texts` text ids recorded in every
// emotion, embedded and projected together.
ojson tsne_figures(const Args& a, const CorpusIndex& index, const fs::path& dir) {
  const SerModel ser = SerModel::load(a.ser);
  TsneOptions o;
  if (a.perplexity) o.perplexity = *a.perplexity;
  if (a.iterations) o.iterations = *a.iterations;
  o.seed = a.seed.value_or(o.seed);
  ojson figures = ojson::object();
  for (const auto& speaker : index.speakers) {
    std::map<std::string, std::set<Emotion>> texts;
    std::set<Emotion> emotions;
    for (const auto& u : index.utterances)
      if (u.speaker_id == speaker) {
        texts[u.text_id].insert(u.emotion);
        emotions.insert(u.emotion);
      }
    std::vector<std::string> common;
    for (const auto& [t, es] : texts)
      if (es == emotions) common.push_back(t);
    std::sort(common.begin(), common.end(), text_id_less);
    if (static_cast<int>(common.size()) > a.tsne_texts) common.resize(a.tsne_texts);
    const std::set<std::string> keep(common.begin(), common.end());
    std::vector<Utterance> utts;
    std::vector<int> labels;
    const std::vector<Emotion> order(emotions.begin(), emotions.end());
    for (const auto& u : index.utterances)
      if (u.speaker_id == speaker && keep.count(u.text_id)) {
        utts.push_back(u);
        labels.push_back(static_cast<int>(std::find(order.begin(), order.end(), u.emotion) - order.begin()));
      }
    std::vector<std::vector<double>> waves;
    for (auto& c : load_clips(utts)) waves.push_back(std::move(c.waveform));
    const Matrix phi = ser.embed_batch(waves);
    const Matrix coords = tsne_project(phi, o);
    const int k = static_cast<int>(order.size());
    const fs::path png = dir / ("tsne_" + speaker + ".png");
    write_scatter_png(png, coords, labels);
    ojson points = ojson::array();
    for (std::size_t i = 0; i < utts.size(); ++i)
      points.push_back({{"id", utts[i].id},
                        {"emotion", to_string(utts[i].emotion)},
                        {"x", coords(static_cast<Eigen::Index>(i), 0)},
                        {"y", coords(static_cast<Eigen::Index>(i), 1)}});
    figures[speaker] = {{"plot", png.filename().string()},
                        {"emotions", emotion_names(order)},
                        {"points", points},
                        {"purity_embedding", cluster_purity(phi, labels, k, o.seed)},
                        {"purity_projection", cluster_purity(coords, labels, k, o.seed)}};
  }
  return figures;
}

int cmd_evaluate(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "evaluate");
  const CorpusIndex index = read_manifest(a.manifest);
  const McdReport report = mcd_report(a.converted, index, resolve_cache(a.cache));
  const fs::path dir = a.out;
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(dir / name);
    f << text;
    if (!f) fail("WriteFailed", "cannot write " + (dir / name).string());
  };
  write("mcd.csv", report.csv());
  write("mcd.md", report.markdown());
  std::string pairs = "source_id,target_id,pair,gender,zero_effort,system\n";
  for (const auto& p : report.pairs) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", p.zero_effort, p.system);
    pairs += p.source_id + "," + p.target_id + "," + p.pair_tag + "," + p.gender + "," + buf + "\n";
  }
  write("mcd_pairs.csv", pairs);
  ojson summary{{"command", "evaluate"}, {"out", a.out}, {"pairs", report.pairs.size()}};
  ojson cells = ojson::array();
  for (const auto& c : report.cells)
    cells.push_back({{"pair", c.pair_tag}, {"gender", c.gender}, {"pairs", c.pairs},
                     {"zero_effort", c.zero_effort}, {"system", c.system}});
  summary["cells"] = cells;
  if (!a.ser.empty()) {
    const ojson figures = tsne_figures(a, index, dir);
    write("tsne.json", figures.dump(2) + "\n");
    ojson purity = ojson::object();
    for (const auto& [speaker, f] : figures.items()) purity[speaker] = f["purity_embedding"];
    summary["purity"] = purity;
  }
  emit(out, summary);
  return 0;
}

// Stops `server` on SIGINT or SIGTERM; the signals must already be blocked.
class SignalStop {
 public:
  explicit SignalStop(ListenServer& server)
      : thread_([this, &server] {
          sigset_t set;
          sigemptyset(&set);
          sigaddset(&set, SIGINT);
          sigaddset(&set, SIGTERM);
          const timespec tick{0, 200'000'000};
          while (!done_) {
            if (sigtimedwait(&set, nullptr, &tick) > 0) {
              server.stop();
              return;
            }
          }
        }) {}
  ~SignalStop() {
    done_ = true;
    thread_.join();
  }

 private:
  std::atomic<bool> done_{false};
  std::thread thread_;
};

int cmd_listen_serve(const Args& a, const nlohmann::json& rest, std::ostream& out) {
  require_no_extra(rest, "listen-serve");
  if (a.systems.empty()) fail("InvalidFlag", "--system NAME=DIR is required at least once");
  std::map<std::string, fs::path> systems;
  for (const auto& s : a.systems) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      fail("InvalidFlag", "--system expects NAME=DIR, got '" + s + "'");
    systems[s.substr(0, eq)] = s.substr(eq + 1);
  }
  const CorpusIndex index = read_manifest(a.manifest);
  AudioCatalog catalog = catalog_from_conversions(systems, index);
  fs::create_directories(a.data);
  {
    std::ofstream f(fs::path(a.data) / "catalog.json");
    f << catalog.to_json().dump(2) << '\n';
  }
  const std::size_t stimuli = catalog.items().size();
  ListenService service(std::move(catalog), a.data, a.snapshot_every);
  ListenServer server(service);

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  sigset_t previous;
  pthread_sigmask(SIG_BLOCK, &set, &previous);
  if (!server.bind(a.host, a.port)) {
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    fail("BindFailed", "cannot listen on " + a.host + ":" + std::to_string(a.port));
  }
  emit(out, {{"command", "listen-serve"},
             {"host", a.host},
             {"port", server.port()},
             {"stimuli", stimuli},
             {"data", a.data}});
  if (!a.check) {
    SignalStop stopper(server);
    server.serve();
  }
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  return 0;
}

// ---------------------------------------------------------------- parsing

void add_common(CLI::App* sub, Args& a) {
  sub->add_option("--seed", a.seed, "Random seed (default 1)");
  sub->add_option("--config", a.config, "JSON file of option and hyperparameter overrides");
}

void build(CLI::App& app, Args& a) {
  auto* toy = app.add_subcommand("toy-corpus", "Write a synthetic parallel emotional corpus");
  toy->add_option("--out", a.out, "Corpus root")->required();
  toy->add_option("--clips", a.clips, "Clips per emotion and speaker");
  toy->add_option("--seconds", a.seconds, "Clip length at neutral rate");
  toy->add_option("--speakers", a.speakers, "1 (male) or 2 (male, female)");
  toy->add_option("--emotions", a.emotions, "Comma-separated emotions");

  auto* prep = app.add_subcommand("prepare", "Index a corpus and assign splits");
  prep->add_option("--root", a.root, "Corpus root")->required();
  prep->add_option("--out", a.out, "Manifest to write")->required();
  prep->add_option("--splits", a.splits, "train,reference,test counts per speaker and emotion");
  prep->add_option("--input-manifest", a.input_manifest, "Explicit input manifest");
  prep->add_option("--parallel-size", a.parallel_size, "Parallel utterances per emotion");
  prep->add_option("--language", a.language, "Corpus language tag");
  prep->add_flag("--skip-invalid", a.skip_invalid, "Record bad files instead of failing");

  auto* feat = app.add_subcommand("featurize", "Analyse every utterance into the feature cache");
  feat->add_option("--manifest", a.manifest, "Split manifest")->required();
  feat->add_option("--cache", a.cache, "Feature cache directory (default $DEEPEST_CACHE)");
  feat->add_option("--split", a.split, "Only this split");

  auto* ser = app.add_subcommand("train-ser", "Train the emotion recogniser");
  ser->add_option("--manifest", a.manifest, "Split manifest")->required();
  ser->add_option("--out", a.out, "Checkpoint directory")->required();
  ser->add_option("--epochs", a.epochs, "Maximum epochs (default 50)");
  ser->add_option("--batch", a.batch, "Batch size (default 16)");
  ser->add_option("--lr", a.lr, "Adam learning rate (default 1e-4)");
  ser->add_option("--train-split", a.train_split, "Training split");
  ser->add_option("--validation-split", a.validation_split, "Early-stopping split or 'none'");

  auto* embed = app.add_subcommand("embed", "Deep emotional feature of one clip");
  embed->add_option("--ckpt", a.ckpt, "Emotion recogniser checkpoint")->required();
  embed->add_option("--audio", a.audio, "16 kHz WAV")->required();
  embed->add_option("--out", a.out, "Output JSON")->required();

  auto* vc = app.add_subcommand("train-vc", "Train the conversion model");
  vc->add_option("--manifest", a.manifest, "Split manifest")->required();
  vc->add_option("--ser", a.ser, "Emotion recogniser checkpoint")->required();
  vc->add_option("--out", a.out, "Checkpoint directory")->required();
  vc->add_option("--cache", a.cache, "Feature cache directory (default $DEEPEST_CACHE)");
  vc->add_option("--epochs", a.epochs, "Total epochs (default 45)");
  vc->add_option("--vae-epochs", a.vae_epochs, "Phase 1 epochs (default 15)");
  vc->add_option("--batch", a.batch, "Frames per batch (default 256)");
  vc->add_option("--lr", a.lr, "RMSProp learning rate (default 1e-5)");
  vc->add_option("--n-critic", a.n_critic, "Critic steps per generator step (default 5)");
  vc->add_option("--emotions", a.emotions, "Training emotions (default neutral,happy,sad)");

  auto* conv = app.add_subcommand("convert", "Convert source utterances toward a target emotion");
  conv->add_option("--ckpt", a.ckpt, "Conversion checkpoint")->required();
  conv->add_option("--ser", a.ser, "Emotion recogniser checkpoint")->required();
  conv->add_option("--manifest", a.manifest, "Split manifest")->required();
  conv->add_option("--out", a.out, "Output directory")->required();
  conv->add_option("--source-split", a.source_split, "Split of the source utterances");
  conv->add_option("--source-emotion", a.source_emotion, "Emotion of the source utterances");
  conv->add_option("--target-emotion", a.target_emotion, "Target emotion");
  conv->add_option("--refs", a.refs, "Split holding the reference set");
  conv->add_option("--stats-split", a.stats_split, "Split for F0 statistics of seen emotions");
  conv->add_option("--speaker", a.speaker, "Only this speaker");
  conv->add_option("--cache", a.cache, "Feature cache directory (default $DEEPEST_CACHE)");

  auto* ev = app.add_subcommand("evaluate", "MCD report and embedding projections");
  ev->add_option("--converted", a.converted, "Directory of converted files")->required();
  ev->add_option("--manifest", a.manifest, "Split manifest")->required();
  ev->add_option("--out", a.out, "Report directory")->required();
  ev->add_option("--cache", a.cache, "Feature cache directory (default $DEEPEST_CACHE)");
  ev->add_option("--ser", a.ser, "Emotion recogniser checkpoint; enables t-SNE plots");
  ev->add_option("--perplexity", a.perplexity, "t-SNE perplexity (default 10)");
  ev->add_option("--iterations", a.iterations, "t-SNE iterations (default 1000)");
  ev->add_option("--tsne-texts", a.tsne_texts, "Text ids per speaker in the projection");

  auto* ls = app.add_subcommand("listen-serve", "Serve listening tests over HTTP");
  ls->add_option("--system", a.systems, "NAME=DIR of converted audio, repeatable")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ls->add_option("--manifest", a.manifest, "Split manifest")->required();
  ls->add_option("--data", a.data, "Directory for responses")->required();
  ls->add_option("--host", a.host, "Bind address");
  ls->add_option("--port", a.port, "Port, 0 for any free port");
  ls->add_option("--snapshot-every", a.snapshot_every, "Records between snapshots");
  ls->add_flag("--check", a.check, "Bind, report and exit without serving");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) add_common(sub, a);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Emotional voice conversion with deep emotional features", "deepest"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  Args a;
  build(app, a);

  if (args.empty()) fail("UnknownCommand", "no command given; expected one of " + scalar_text(kCommands));
  if (args[0] == "--help" || args[0] == "-h") {
    out << app.help();
    return 0;
  }
  if (std::find(kCommands.begin(), kCommands.end(), args[0]) == kCommands.end()) {
    if (args[0].rfind("-", 0) == 0) fail("InvalidFlag", "unexpected " + args[0] + " before the command");
    fail("UnknownCommand", "unknown command '" + args[0] + "'; expected one of " + scalar_text(kCommands));
  }
  CLI::App* sub = app.get_subcommand(args[0]);
  const std::vector<std::string> user(args.begin() + 1, args.end());
  std::vector<std::string> tokens{args[0]};
  const nlohmann::json rest = apply_config(*sub, args[0], user, tokens);
  tokens.insert(tokens.end(), user.begin(), user.end());
  std::vector<std::string> reversed(tokens.rbegin(), tokens.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << sub->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    fail("InvalidFlag", e.what());
  }

  const std::string& c = args[0];
  if (c == "toy-corpus") return cmd_toy_corpus(a, rest, out);
  if (c == "prepare") return cmd_prepare(a, rest, out);
  if (c == "featurize") return cmd_featurize(a, rest, out);
  if (c == "train-ser") return cmd_train_ser(a, rest, out);
  if (c == "embed") return cmd_embed(a, rest, out);
  if (c == "train-vc") return cmd_train_vc(a, rest, out);
  if (c == "convert") return cmd_convert(a, rest, out, err);
  if (c == "evaluate") return cmd_evaluate(a, rest, out);
  return cmd_listen_serve(a, rest, out);
}

}  // namespace

std::vector<std::string> cli_commands() { return kCommands; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto report = [&](const std::string& code, const std::string& message) {
    err << ojson{{"error", code}, {"message", message}}.dump() << std::endl;
  };
  try {
    return dispatch(args, out, err);
  } catch (const Error& e) {
    report(e.code(), e.what());
    const bool usage = e.code() == "UnknownCommand" || e.code() == "InvalidFlag" || e.code() == "InvalidConfig";
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    report("InternalError", e.what());
    return 1;
  }
}

}  // namespace deepest
