#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include "common.hpp"
#include "deepest/distortion.hpp"
#include "deepest/evaluate.hpp"
#include "deepest/feature_cache.hpp"
#include "toy_models.hpp"

using namespace deepest;
using testing::error_code;
using testing::toy_models;

namespace {

Matrix gaussian_clusters(const std::vector<Eigen::RowVectorXd>& centres, int per_cluster, double sd,
                         std::vector<int>& labels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sd);
  Matrix x(static_cast<Eigen::Index>(centres.size()) * per_cluster, centres[0].size());
  labels.clear();
  for (std::size_t c = 0; c < centres.size(); ++c)
    for (int i = 0; i < per_cluster; ++i) {
      const auto row = static_cast<Eigen::Index>(c * per_cluster + i);
      for (Eigen::Index d = 0; d < x.cols(); ++d) x(row, d) = centres[c][d] + noise(rng);
      labels.push_back(static_cast<int>(c));
    }
  return x;
}

Utterance parallel_of(const Utterance& source, Emotion target) {
  for (const auto& u : toy_models().index.utterances)
    if (u.speaker_id == source.speaker_id && u.emotion == target && u.text_id == source.text_id) return u;
  FAIL("no parallel utterance");
  return {};
}

}  // namespace

TEST_CASE("mcd report on target copies is zero and matches direct zero-effort distortion") {
  const auto& m = toy_models();
  testing::TempDir dir("mcd_self");
  const auto sources = select(m.index, {std::nullopt, Emotion::kNeutral, std::nullopt});
  REQUIRE(sources.size() == 6);
  for (const auto& s : sources)
    for (Emotion e : {Emotion::kHappy, Emotion::kSad})
      std::filesystem::copy_file(parallel_of(s, e).audio_path, dir / (s.id + "__to__" + to_string(e) + ".wav"));
  const auto report = mcd_report(dir.path(), m.index);
  REQUIRE(report.pairs.size() == 12);
  REQUIRE(report.cells.size() == 2);
  CHECK(report.pair_tags() == std::vector<std::string>{"N2H", "N2S"});
  CHECK(report.genders() == std::vector<std::string>{"male"});
  for (const auto& p : report.pairs) {
    CHECK(p.system == 0.0);
    CHECK(p.zero_effort > 0.0);
    const auto& src = *std::find_if(sources.begin(), sources.end(), [&](const Utterance& u) { return u.id == p.source_id; });
    const auto tgt = parallel_of(src, parse_emotion(p.pair_tag == "N2H" ? "happy" : "sad"));
    CHECK(p.target_id == tgt.id);
    const double direct = mcd(mcep(utterance_features(src).sp), mcep(utterance_features(tgt).sp));
    CHECK(std::abs(p.zero_effort - direct) < 1e-12);
  }
  CHECK(report.cells[0].pairs == 6);
  CHECK(report.cells[0].system == 0.0);

  const std::string csv = report.csv();
  CHECK(csv.rfind("pair,male_zero_effort,male_system,male_pairs\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  CHECK(report.markdown().find("| N2H |") != std::string::npos);
}

TEST_CASE("mcd report errors and order invariance") {
  const auto& m = toy_models();
  testing::TempDir dir("mcd_missing");
  const auto source = select(m.index, {std::nullopt, Emotion::kNeutral, Split::kTest}).front();
  std::filesystem::copy_file(source.audio_path, dir / (source.id + "__to__surprise.wav"));
  CHECK(error_code([&] { mcd_report(dir.path(), m.index); }) == "MissingPair");
  std::filesystem::remove(dir / (source.id + "__to__surprise.wav"));
  std::filesystem::copy_file(source.audio_path, dir / "nobody__to__happy.wav");
  CHECK(error_code([&] { mcd_report(dir.path(), m.index); }) == "MissingPair");

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 9.0);
  std::vector<McdPair> pairs;
  for (int i = 0; i < 40; ++i)
    pairs.push_back({"s" + std::to_string(i), "t", i % 3 ? "N2H" : "N2S", i % 2 ? "male" : "female", u(rng), u(rng)});
  const auto a = summarize_pairs(pairs);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  const auto b = summarize_pairs(pairs);
  REQUIRE(a.size() == 4);
  CHECK(a[0].gender == "male");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].zero_effort == b[i].zero_effort);
    CHECK(a[i].system == b[i].system);
    CHECK(a[i].pairs == b[i].pairs);
  }
}

TEST_CASE("tsne rejects too few points") {
  Matrix x = Matrix::Random(4, 3);
  CHECK(error_code([&] { tsne_project(x, {.perplexity = 30.0}); }) == "TooFewPoints");
  CHECK(error_code([&] { tsne_project(Matrix::Random(10, 3), {.perplexity = 10.0}); }) == "TooFewPoints");
}

TEST_CASE("tsne separates well-separated clusters reproducibly") {
  std::vector<int> labels;
  const Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(256), b = Eigen::RowVectorXd::Ones(256);
  const Matrix x = gaussian_clusters({a, b}, 20, 0.3, labels, 5);
  TsneOptions o;
  o.iterations = 400;
  const Matrix y = tsne_project(x, o);
  CHECK(y.rows() == 40);
  CHECK(y.cols() == 2);
  CHECK(y.allFinite());
  CHECK(cluster_purity(y, labels, 2) > 0.95);
  CHECK(tsne_project(x, o) == y);
}

TEST_CASE("scatter plot is a PNG") {
  testing::TempDir dir("png");
  std::vector<int> labels;
  std::vector<Eigen::RowVectorXd> centres;
  for (int c = 0; c < 4; ++c) centres.push_back(Eigen::RowVectorXd::Constant(2, 3.0 * c));
  const Matrix x = gaussian_clusters(centres, 20, 0.5, labels, 2);
  write_scatter_png(dir / "fig.png", x, labels, 200);
  std::ifstream in(dir / "fig.png", std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
  CHECK(error_code([&] { write_scatter_png(dir / "bad.png", x, {1, 2}); }) == "LabelMismatch");
}

TEST_CASE("cluster purity oracles") {
  std::vector<int> labels;
  std::vector<Eigen::RowVectorXd> centres;
  for (int c = 0; c < 3; ++c) centres.push_back(Eigen::RowVectorXd::Constant(5, 4.0 * c));
  const Matrix x = gaussian_clusters(centres, 30, 1.0, labels, 8);

  SUBCASE("labels equal to the clustering") {
    const auto assignment = kmeans_assign(x, 3);
    CHECK(cluster_purity(x, assignment, 3) == 1.0);
  }
  SUBCASE("single label") {
    CHECK(cluster_purity(x, std::vector<int>(90, 7), 1) == 1.0);
  }
  SUBCASE("random balanced labels") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix noise(2000, 4);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = n(rng);
    std::vector<int> coin(2000);
    for (std::size_t i = 0; i < coin.size(); ++i) coin[i] = static_cast<int>(i % 2);
    std::shuffle(coin.begin(), coin.end(), rng);
    CHECK(std::abs(cluster_purity(noise, coin, 2) - 0.5) < 0.05);
  }
  SUBCASE("mismatch") {
    CHECK(error_code([&] { cluster_purity(x, labels, 2); }) == "LabelMismatch");
    CHECK(error_code([&] { cluster_purity(x, {0, 1}, 2); }) == "LabelMismatch");
  }
  CHECK(cluster_purity(x, labels, 3) == cluster_purity(x, labels, 3));
}
