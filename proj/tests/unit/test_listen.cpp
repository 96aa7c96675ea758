#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "common.hpp"
#include "deepest/listen.hpp"
#include "deepest/wav.hpp"

using namespace deepest;
using testing::error_code;

namespace {

// 3 emotion pairs x 20 items for two systems plus references.
struct Stimuli {
  testing::TempDir dir{"stimuli"};
  AudioCatalog catalog;
  Stimuli() {
    const std::vector<double> tone(800, 0.1);
    for (std::string pair : {"N2A", "N2H", "N2S"})
      for (int i = 0; i < 20; ++i)
        for (std::string system : {"deepest", "baseline", "reference"}) {
          const std::string item = pair + "_" + std::to_string(i);
          const auto path = dir / (system + "_" + item + ".wav");
          write_wav(path, tone, 16000);
          catalog.add({"", system, pair, item, path});
        }
  }
};

SessionConfig config(Protocol p, std::vector<std::string> systems, int clips, std::uint64_t seed = 1) {
  SessionConfig c;
  c.seed = seed;
  c.blocks.push_back({p, std::move(systems), {}, clips});
  return c;
}

TrialResponse answer(const std::string& session, const TrialSpec& t, nlohmann::json value) {
  return {session, "", t.trial_id, std::move(value), 1200, ""};
}

// Always prefers `system`, whatever the presentation order.
std::string pick(const TrialSpec& t, const std::string& system) {
  const std::size_t a = t.protocol == Protocol::kXab ? 1 : 0;
  return t.condition_tags[a] == system ? "A" : "B";
}

}  // namespace

TEST_CASE("mos t-interval oracles") {
  const std::vector<double> flat{4, 4, 4};
  const auto f = aggregate_mos(flat);
  CHECK(f.mean == 4.0);
  CHECK(f.half_width == 0.0);
  CHECK(f.display() == "4.00 ± 0.00");

  const std::vector<double> r{5, 5, 4};
  const auto s = aggregate_mos(r);
  // Student t with 2 degrees of freedom has the closed-form quantile
  // (2p - 1) / sqrt(2 p (1 - p)).
  const double t = 0.95 / std::sqrt(2.0 * 0.975 * 0.025);
  const double sd = std::sqrt(((5 - 14.0 / 3) * (5 - 14.0 / 3) * 2 + (4 - 14.0 / 3) * (4 - 14.0 / 3)) / 2.0);
  CHECK(std::abs(s.mean - 14.0 / 3) < 1e-12);
  CHECK(std::abs(s.half_width - t * sd / std::sqrt(3.0)) < 1e-9);
  CHECK(std::abs(s.mean - 4.667) < 1e-3);
  CHECK(std::abs(s.half_width - 1.434) < 1e-3);
  CHECK(s.display() == "4.67 ± 1.43");

  const std::vector<double> one{3};
  CHECK(error_code([&] { aggregate_mos(one); }) == "InsufficientResponses");
}

TEST_CASE("adding a rating at the mean never widens the interval") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> score(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(2 + trial % 15);
    for (auto& v : r) v = score(rng);
    const auto before = aggregate_mos(r);
    r.push_back(before.mean);
    CHECK(aggregate_mos(r).half_width <= before.half_width + 1e-12);
  }
}

TEST_CASE("preference percentages") {
  const auto all = aggregate_preference(std::vector<std::string>(10, "deepest"), {"baseline", "deepest"});
  CHECK(all.percent == std::vector<std::pair<std::string, double>>{{"baseline", 0.0}, {"deepest", 100.0}});
  const auto split = aggregate_preference({"a", "a", "b", "a"}, {"a", "b"});
  CHECK(split.percent[0].second == 75.0);
  CHECK(split.percent[1].second == 25.0);
  CHECK(error_code([] { aggregate_preference({}, {"a"}); }) == "InsufficientResponses");
}

TEST_CASE("session construction") {
  Stimuli st;
  SUBCASE("3 pairs x 2 systems x 18 clips give 108 MOS trials") {
    const auto trials = build_session(st.catalog, config(Protocol::kMos, {"deepest", "baseline"}, 18), "s1");
    CHECK(trials.size() == 108);
    std::set<std::string> ids, refs;
    for (const auto& t : trials) {
      ids.insert(t.trial_id);
      refs.insert(t.stimuli[0]);
      CHECK(t.stimuli.size() == 1);
    }
    CHECK(ids.size() == 108);
    CHECK(refs.size() == 108);
  }
  SUBCASE("same seed, same order; different seed, different order") {
    const auto c = config(Protocol::kAb, {"deepest", "baseline"}, 18);
    const auto a = build_session(st.catalog, c, "s1");
    const auto b = build_session(st.catalog, c, "s1");
    const auto other = build_session(st.catalog, config(Protocol::kAb, {"deepest", "baseline"}, 18, 9), "s1");
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].to_json() == b[i].to_json());
      differs = differs || a[i].stimuli != other[i].stimuli;
    }
    CHECK(differs);
    int deepest_first = 0;
    for (const auto& t : a) deepest_first += t.condition_tags[0] == "deepest";
    CHECK(deepest_first == 27);
  }
  SUBCASE("xab puts the reference first") {
    for (const auto& t : build_session(st.catalog, config(Protocol::kXab, {"deepest", "baseline"}, 4), "s1")) {
      REQUIRE(t.stimuli.size() == 3);
      CHECK(t.condition_tags[0] == "reference");
      CHECK(t.stimuli[0] == st.catalog.find("reference", t.item)->ref);
      CHECK(t.public_json().dump().find("deepest") == std::string::npos);
    }
  }
  SUBCASE("empty systems give an empty session") {
    CHECK(build_session(st.catalog, config(Protocol::kMos, {}, 18), "s1").empty());
  }
  SUBCASE("missing audio") {
    std::filesystem::remove(st.catalog.find("deepest", "N2H_0")->path);
    CHECK(error_code([&] { build_session(st.catalog, config(Protocol::kMos, {"deepest"}, 3), "s1"); }) ==
          "MissingStimulus");
    CHECK(error_code([&] { build_session(st.catalog, config(Protocol::kMos, {"nobody"}, 3), "s1"); }) ==
          "MissingStimulus");
  }
}

TEST_CASE("responses are validated, deduplicated and survive a restart") {
  Stimuli st;
  testing::TempDir data("listen_data");
  std::string mos_id, ab_id;
  {
    ListenService svc(st.catalog, data.path(), 3);
    mos_id = svc.create_session(config(Protocol::kMos, {"deepest"}, 2));
    ab_id = svc.create_session(config(Protocol::kAb, {"deepest", "baseline"}, 2));
    const auto mos = svc.trials(mos_id);
    REQUIRE(mos.size() == 6);
    CHECK(error_code([&] { svc.submit(answer(mos_id, mos[0], 6)); }) == "InvalidValue");
    CHECK(error_code([&] { svc.submit(answer(mos_id, mos[0], 0)); }) == "InvalidValue");
    CHECK(error_code([&] { svc.submit(answer(mos_id, mos[0], 4.5)); }) == "InvalidValue");
    CHECK(error_code([&] { svc.submit(answer(mos_id, mos[0], "A")); }) == "InvalidValue");
    svc.submit(answer(mos_id, mos[0], 5));
    CHECK(error_code([&] { svc.submit(answer(mos_id, mos[0], 4)); }) == "DuplicateResponse");
    TrialResponse stray = answer(mos_id, mos[0], 3);
    stray.trial_id = "s00001-t999";
    CHECK(error_code([&] { svc.submit(stray); }) == "UnknownTrial");
    stray.session_id = "nope";
    CHECK(error_code([&] { svc.submit(stray); }) == "UnknownSession");
    CHECK(svc.next_trial(mos_id)->trial_id == mos[1].trial_id);

    const auto ab = svc.trials(ab_id);
    CHECK(error_code([&] { svc.submit(answer(ab_id, ab[0], "none")); }) == "InvalidValue");
    for (const auto& t : ab) svc.submit(answer(ab_id, t, pick(t, "deepest")));
    CHECK_FALSE(svc.next_trial(ab_id).has_value());
    CHECK(ab.size() == 6);
    CHECK(svc.responses().size() == 7);
  }
  // Leave a torn record behind as after a crash mid-write.
  std::ofstream(data / "records.jsonl", std::ios::app) << "{\"type\":\"resp";
  ListenService again(st.catalog, data.path(), 3);
  CHECK(again.responses().size() == 7);
  CHECK(again.progress(mos_id) == std::pair{1, 6});
  CHECK(error_code([&] { again.submit(answer(mos_id, again.trials(mos_id)[0], 4)); }) == "DuplicateResponse");
  CHECK(again.results(Protocol::kAb, std::nullopt)["groups"][0]["percent"]["deepest"] == 100.0);
}

TEST_CASE("preference results are invariant to presentation order and partition by pair") {
  Stimuli st;
  std::vector<nlohmann::ordered_json> results;
  for (std::uint64_t seed : {1, 2, 3}) {
    testing::TempDir data("listen_shuffle");
    ListenService svc(st.catalog, data.path());
    auto c = config(Protocol::kXab, {"deepest", "baseline"}, 4, seed);
    const auto id = svc.create_session(c);
    // Prefer "deepest" for three quarters of the items of each pair.
    for (const auto& t : svc.trials(id)) {
      const bool first = t.item.ends_with("_0");
      svc.submit(answer(id, t, pick(t, first ? "baseline" : "deepest")));
    }
    results.push_back(svc.results(Protocol::kXab, std::nullopt));
  }
  CHECK(results[0] == results[1]);
  CHECK(results[0] == results[2]);
  REQUIRE(results[0]["groups"].size() == 3);
  for (const auto& g : results[0]["groups"]) {
    CHECK(g["percent"]["deepest"] == 75.0);
    CHECK(g["percent"]["baseline"].get<double>() + g["percent"]["deepest"].get<double>() == 100.0);
  }
}

TEST_CASE("http api") {
  Stimuli st;
  testing::TempDir data("listen_http");
  ListenService svc(st.catalog, data.path());
  ListenServer server(svc);
  REQUIRE(server.bind("127.0.0.1", 0));
  std::thread worker([&] { server.serve(); });
  httplib::Client cli("127.0.0.1", server.port());

  nlohmann::json cfg = {{"rater_id", "r1"},
                        {"blocks",
                         {{{"protocol", "MOS"}, {"systems", {"deepest"}}, {"emotion_pairs", {"N2H"}}, {"clips_per_pair", 2}},
                          {{"protocol", "AB"}, {"systems", {"deepest", "baseline"}}, {"emotion_pairs", {"N2H"}}, {"clips_per_pair", 2}},
                          {{"protocol", "XAB"}, {"systems", {"deepest", "baseline"}}, {"emotion_pairs", {"N2S"}}, {"clips_per_pair", 2}}}}};
  auto created = cli.Post("/sessions", cfg.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto session = nlohmann::json::parse(created->body);
  CHECK(session["total"] == 6);
  const std::string id = session["session_id"];

  int answered = 0;
  for (;;) {
    auto next = cli.Get("/sessions/" + id + "/trials/next");
    REQUIRE(next);
    REQUIRE(next->status == 200);
    const auto body = nlohmann::json::parse(next->body);
    if (body["done"].get<bool>()) {
      CHECK(body["completed"] == 6);
      break;
    }
    const auto& trial = body["trial"];
    CHECK_FALSE(trial.contains("condition_tags"));
    auto audio = cli.Get(trial["stimuli"][0]["url"].get<std::string>());
    REQUIRE(audio);
    CHECK(audio->status == 200);
    CHECK(audio->body.substr(0, 4) == "RIFF");
    nlohmann::json value = trial["protocol"] == "MOS" ? nlohmann::json(4) : nlohmann::json("A");
    nlohmann::json resp = {{"session_id", id}, {"rater_id", "r1"}, {"trial_id", trial["trial_id"]}, {"value", value}};
    auto posted = cli.Post("/responses", resp.dump(), "application/json");
    REQUIRE(posted);
    CHECK(posted->status == 201);
    auto again = cli.Post("/responses", resp.dump(), "application/json");
    REQUIRE(again);
    CHECK(again->status == 409);
    CHECK(nlohmann::json::parse(again->body)["code"] == "DuplicateResponse");
    ++answered;
  }
  CHECK(answered == 6);
  CHECK(svc.responses().size() == 6);

  auto results = cli.Get("/results?protocol=MOS&group=N2H");
  REQUIRE(results);
  CHECK(results->status == 200);
  const auto mos = nlohmann::json::parse(results->body);
  CHECK(mos["groups"][0]["display"] == "4.00 ± 0.00");
  auto none = cli.Get("/results?protocol=MOS&group=N2A");
  REQUIRE(none);
  CHECK(none->status == 422);
  CHECK(nlohmann::json::parse(none->body)["code"] == "InsufficientResponses");

  auto bad_value = cli.Post("/responses", R"({"session_id":")" + id + R"(","trial_id":"x","value":3})", "application/json");
  REQUIRE(bad_value);
  CHECK(bad_value->status == 404);
  CHECK(nlohmann::json::parse(bad_value->body)["code"] == "UnknownTrial");
  auto bad_json = cli.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  CHECK(nlohmann::json::parse(bad_json->body)["code"] == "InvalidValue");
  auto missing = cli.Get("/audio/zzz");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(nlohmann::json::parse(missing->body)["code"] == "MissingStimulus");
  auto unknown = cli.Get("/nowhere");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
  CHECK(nlohmann::json::parse(unknown->body).contains("code"));

  server.stop();
  worker.join();
}
