#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "../unit/common.hpp"
#include "deepest/cli.hpp"
#include "deepest/corpus.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
  nlohmann::json summary() const { return nlohmann::json::parse(out.substr(0, out.find('\n'))); }
  nlohmann::json error() const { return nlohmann::json::parse(err.substr(0, err.find('\n'))); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.status = deepest::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string s(const fs::path& p) { return p.string(); }

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Arch override small enough for CLI runs; training hyperparameters stay at
// their defaults unless a test sets them.
const char* kSmallArch = R"("arch": {"encoder": {"channels": [2,2,2,2,2]},
  "decoder": {"fc_channels": 2, "channels": [2,2,2]}, "critic": {"channels": [2,2,2]}})";

// One toy corpus, manifest, cache and SER checkpoint shared by the pipeline
// cases, built through the CLI itself.
struct Workspace {
  testing::TempDir dir{"cli"};
  fs::path manifest = dir / "manifest.json";
  fs::path cache = dir / "cache";
  fs::path ser = dir / "ser";
  fs::path small_vc = dir / "small_vc.json";

  Workspace() {
    REQUIRE(run({"toy-corpus", "--out", s(dir / "corpus"), "--clips", "6", "--speakers", "1", "--seed", "4"}).status == 0);
    REQUIRE(run({"prepare", "--root", s(dir / "corpus"), "--out", s(manifest), "--splits", "3,2,1"}).status == 0);
    REQUIRE(run({"featurize", "--manifest", s(manifest), "--cache", s(cache)}).status == 0);
    write_text(dir / "ser.json",
               R"({"epochs": 3, "lr": 1e-3, "batch": 4, "conv_channels": [2, 2], "attention_dim": 8,
                   "mel": {"segment_frames": 16}})");
    REQUIRE(run({"train-ser", "--manifest", s(manifest), "--out", s(ser), "--config", s(dir / "ser.json")}).status == 0);
    write_text(small_vc, std::string(R"({"epochs": 2, "vae_epochs": 1, "batch": 64, "lr": 1e-3, "n_critic": 2, )") +
                             kSmallArch + "}");
  }
};

Workspace& workspace() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 2 with a structured error line") {
  SUBCASE("unknown command") {
    const auto r = run({"frobnicate"});
    CHECK(r.status == 2);
    CHECK(r.error()["error"] == "UnknownCommand");
    CHECK(r.out.empty());
  }
  SUBCASE("no command") {
    CHECK(run({}).error()["error"] == "UnknownCommand");
  }
  SUBCASE("unknown flag") {
    const auto r = run({"prepare", "--root", "x", "--out", "y", "--colour", "blue"});
    CHECK(r.status == 2);
    CHECK(r.error()["error"] == "InvalidFlag");
  }
  SUBCASE("missing required flag") {
    CHECK(run({"embed", "--ckpt", "x"}).error()["error"] == "InvalidFlag");
  }
  SUBCASE("malformed values") {
    CHECK(run({"prepare", "--root", "x", "--out", "y", "--splits", "3,2"}).error()["error"] == "InvalidFlag");
    CHECK(run({"toy-corpus", "--out", "x", "--clips", "many"}).error()["error"] == "InvalidFlag");
    CHECK(run({"toy-corpus", "--out", "x", "--emotions", "bored"}).error()["error"] == "InvalidFlag");
  }
  SUBCASE("config problems") {
    testing::TempDir d("cli_cfg");
    CHECK(run({"prepare", "--root", "x", "--out", "y", "--config", s(d / "absent.json")}).status == 2);
    write_text(d / "bad.json", "{not json");
    CHECK(run({"prepare", "--root", "x", "--out", "y", "--config", s(d / "bad.json")}).error()["error"] ==
          "InvalidConfig");
    write_text(d / "extra.json", R"({"flavour": 3})");
    CHECK(run({"prepare", "--root", "x", "--out", "y", "--config", s(d / "extra.json")}).error()["error"] ==
          "InvalidConfig");
  }
  SUBCASE("help") {
    const auto r = run({"convert", "--help"});
    CHECK(r.status == 0);
    CHECK(r.out.find("--target-emotion") != std::string::npos);
  }
}

TEST_CASE("runtime failures exit 1") {
  const auto r = run({"prepare", "--root", "/nonexistent/corpus", "--out", "/tmp/never.json"});
  CHECK(r.status == 1);
  CHECK_FALSE(r.error()["error"].get<std::string>().empty());
}

TEST_CASE("prepare is reproducible and config values yield to flags") {
  auto& w = workspace();
  testing::TempDir d("cli_prepare");
  write_text(d / "cfg.json", R"({"prepare": {"splits": "2,2,2"}})");
  REQUIRE(run({"prepare", "--root", s(w.dir / "corpus"), "--out", s(d / "a.json"), "--config", s(d / "cfg.json")})
              .status == 0);
  const auto from_file = deepest::read_manifest(d / "a.json");
  CHECK(deepest::select(from_file, {std::nullopt, std::nullopt, deepest::Split::kTrain}).size() == 8);

  REQUIRE(run({"prepare", "--root", s(w.dir / "corpus"), "--out", s(d / "b.json"), "--config", s(d / "cfg.json"),
               "--splits", "3,2,1"})
              .status == 0);
  CHECK(slurp(d / "b.json") == slurp(w.manifest));
}

TEST_CASE("the cache directory falls back to DEEPEST_CACHE") {
  auto& w = workspace();
  testing::TempDir d("cli_env");
  ::setenv("DEEPEST_CACHE", s(d / "envcache").c_str(), 1);
  const auto r = run({"featurize", "--manifest", s(w.manifest), "--split", "test"});
  ::unsetenv("DEEPEST_CACHE");
  REQUIRE(r.status == 0);
  CHECK(r.summary()["computed"] == 4);
  CHECK(fs::exists(d / "envcache"));
  CHECK(run({"featurize", "--manifest", s(w.manifest)}).error()["error"] == "InvalidFlag");
}

TEST_CASE("embed writes a 256-dimensional feature") {
  auto& w = workspace();
  const auto u = deepest::read_manifest(w.manifest).utterances.front();
  const auto r = run({"embed", "--ckpt", s(w.ser), "--audio", s(u.audio_path), "--out", s(w.dir / "vec.json")});
  REQUIRE(r.status == 0);
  const auto doc = nlohmann::json::parse(slurp(w.dir / "vec.json"));
  CHECK(doc["phi"].size() == 256);
  CHECK(doc["dim"] == 256);
  CHECK(doc["probabilities"].size() == 4);
}

TEST_CASE("train-vc defaults appear in the training log header") {
  auto& w = workspace();
  testing::TempDir d("cli_vc_default");
  write_text(d / "arch.json", std::string("{") + kSmallArch + "}");
  const auto r = run({"train-vc", "--manifest", s(w.manifest), "--cache", s(w.cache), "--ser", s(w.ser), "--out",
                      s(d / "vc"), "--config", s(d / "arch.json")});
  REQUIRE(r.status == 0);
  const auto lines = read_lines(d / "vc" / "training_log.csv");
  REQUIRE(!lines.empty());
  CHECK(lines[0] == "# epochs=45 batch=256 lr=1e-05 seed=1");
  CHECK(lines.size() == 2 + 45);
}

TEST_CASE("train-vc epochs from the config file and from flags") {
  auto& w = workspace();
  testing::TempDir d("cli_vc_epochs");
  const std::vector<std::string> base{"train-vc", "--manifest", s(w.manifest), "--cache", s(w.cache), "--ser",
                                      s(w.ser),   "--config",   s(w.small_vc)};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  REQUIRE(with({"--out", s(d / "a")}).status == 0);
  const auto a = read_lines(d / "a" / "training_log.csv");
  CHECK(a.size() == 2 + 2);
  CHECK(a[0] == "# epochs=2 batch=64 lr=0.001 seed=1");

  REQUIRE(with({"--out", s(d / "b"), "--epochs", "3", "--seed", "1"}).status == 0);
  const auto b = read_lines(d / "b" / "training_log.csv");
  CHECK(b.size() == 2 + 3);
  // Same seed and data: the first epoch is identical.
  CHECK(a[2] == b[2]);
}

TEST_CASE("convert and evaluate produce reproducible files") {
  auto& w = workspace();
  testing::TempDir d("cli_convert");
  REQUIRE(run({"train-vc", "--manifest", s(w.manifest), "--cache", s(w.cache), "--ser", s(w.ser), "--out",
               s(d / "vc"), "--config", s(w.small_vc)})
              .status == 0);
  auto convert = [&](const fs::path& out, const std::string& emotion) {
    return run({"convert", "--ckpt", s(d / "vc"), "--ser", s(w.ser), "--manifest", s(w.manifest), "--source-split",
                "test", "--target-emotion", emotion, "--refs", "reference", "--out", s(out), "--cache", s(w.cache)});
  };
  const auto first = convert(d / "one", "happy");
  REQUIRE(first.status == 0);
  CHECK(first.summary()["converted"] == 1);
  const auto second = convert(d / "two", "happy");
  CHECK(first.summary()["waveform_checksums"] == second.summary()["waveform_checksums"]);
  CHECK(slurp(d / "one" / "0001_000006__to__happy.wav") == slurp(d / "two" / "0001_000006__to__happy.wav"));

  const auto unseen = convert(d / "one", "angry");
  REQUIRE(unseen.status == 0);
  const auto sidecar = nlohmann::json::parse(slurp(d / "one" / "0001_000006__to__angry.json"));
  CHECK(sidecar["f0_stats"]["target_from_references"] == true);

  const auto bad = convert(d / "three", "bored");
  CHECK(bad.status == 2);

  const auto ev = run({"evaluate", "--converted", s(d / "one"), "--manifest", s(w.manifest), "--out",
                       s(d / "report"), "--cache", s(w.cache), "--ser", s(w.ser), "--perplexity", "5",
                       "--iterations", "200", "--tsne-texts", "6"});
  REQUIRE(ev.status == 0);
  CHECK(ev.summary()["pairs"] == 2);
  const auto csv = read_lines(d / "report" / "mcd.csv");
  REQUIRE(csv.size() == 3);
  CHECK(csv[1].rfind("N2A,", 0) == 0);
  CHECK(csv[2].rfind("N2H,", 0) == 0);
  CHECK(fs::exists(d / "report" / "mcd.md"));
  CHECK(slurp(d / "report" / "tsne_0001.png").substr(1, 3) == "PNG");
  CHECK(nlohmann::json::parse(slurp(d / "report" / "tsne.json"))["0001"]["points"].size() == 24);
}

TEST_CASE("listen-serve binds and reports its catalog") {
  auto& w = workspace();
  testing::TempDir d("cli_listen");
  fs::create_directories(d / "sys");
  const auto src = deepest::select(deepest::read_manifest(w.manifest),
                                   {std::nullopt, deepest::Emotion::kNeutral, deepest::Split::kTest})
                       .front();
  fs::copy_file(src.audio_path, d / "sys" / (src.id + "__to__happy.wav"));
  const auto r = run({"listen-serve", "--system", "mine=" + s(d / "sys"), "--manifest", s(w.manifest), "--data",
                      s(d / "data"), "--port", "0", "--check"});
  REQUIRE(r.status == 0);
  CHECK(r.summary()["stimuli"] == 2);
  CHECK(r.summary()["port"].get<int>() > 0);
  CHECK(fs::exists(d / "data" / "catalog.json"));
  CHECK(run({"listen-serve", "--system", "broken", "--manifest", s(w.manifest), "--data", s(d / "data"), "--check"})
            .status == 2);
}
