#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "common.hpp"
#include "deepest/vawgan.hpp"

using namespace deepest;
using testing::error_code;

namespace {

VcArch tiny_arch() {
  VcArch a;
  a.encoder_channels = {2, 2, 2, 2, 2};
  a.decoder_fc_channels = 2;
  a.decoder_channels = {2, 2, 2};
  a.critic_channels = {2, 2, 2};
  return a;
}

Matrix normal(int rows, int cols, std::mt19937_64& rng, double mean = 0.0, double sd = 1.0) {
  std::normal_distribution<double> n(mean, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

VcBatch random_batch(int rows, std::mt19937_64& rng) {
  VcBatch b;
  b.frames = normal(rows, 513, rng, -6.0, 1.0);
  b.phi = normal(rows, 256, rng, 0.0, 0.3);
  b.f0 = Vector::Zero(rows);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < rows; ++i) b.f0(i) = u(rng);
  return b;
}

// Per-dimension KL between N(m, s^2) and N(0, 1) from the general two-Gaussian formula.
double kl_brute_force(const Matrix& mu, const Matrix& log_var) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < mu.rows(); ++b)
    for (Eigen::Index j = 0; j < mu.cols(); ++j) {
      const double s1 = std::sqrt(std::exp(log_var(b, j))), s2 = 1.0, m1 = mu(b, j), m2 = 0.0;
      total += std::log(s2 / s1) + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2 * s2 * s2) - 0.5;
    }
  return total / static_cast<double>(mu.rows());
}

VcTrainingData synthetic_frames(int utterances, int frames, std::mt19937_64& rng) {
  VcTrainingData d;
  for (int u = 0; u < utterances; ++u) {
    Vector f0 = Vector::Constant(frames, 110.0 + 20.0 * u);
    f0(0) = 0.0;
    d.add_utterance("u" + std::to_string(u), u % 2 ? Emotion::kHappy : Emotion::kSad,
                    normal(frames, 513, rng, -6.0, 1.0), f0, normal(256, 1, rng).col(0));
  }
  return d;
}

}  // namespace

TEST_CASE("architecture widths follow the layer arithmetic") {
  VcModel m(VcArch{}, 3);
  std::mt19937_64 rng(1);
  for (int B : {1, 7, 256}) {
    const Matrix x = normal(B, 513, rng, -6.0);
    const auto code = m.encode(x);
    CHECK(code.mu.rows() == B);
    CHECK(code.mu.cols() == 128);
    CHECK(code.log_var.cols() == 128);
    CHECK(code.sample.cols() == 128);
    CHECK(m.arch().decoder_input_dim() == 385);
    const Matrix y = m.decode(code.sample, normal(B, 256, rng), Vector::Constant(B, 0.5));
    CHECK(y.rows() == B);
    CHECK(y.cols() == 513);
    CHECK(m.discriminate(x).size() == B);
  }
  const auto layers = m.architecture_json()["layers"];
  CHECK(layers["encoder"].size() == 11);  // 5 x (conv, lrelu) + fc
  CHECK(layers["decoder"].size() == 9);   // fc, lrelu, 3 x (deconv, lrelu), conv
  CHECK(layers["critic"].size() == 7);
}

TEST_CASE("shape contract errors") {
  VcModel m(tiny_arch());
  std::mt19937_64 rng(2);
  CHECK(error_code([&] { m.encode(Matrix::Zero(2, 512)); }) == "ShapeMismatch");
  CHECK(error_code([&] { m.decode(Matrix::Zero(2, 128), Matrix::Zero(2, 255), Vector::Zero(2)); }) ==
        "ShapeMismatch");
  CHECK(error_code([&] { m.decode(Matrix::Zero(2, 128), Matrix::Zero(2, 256), Vector::Zero(3)); }) ==
        "ShapeMismatch");
  CHECK(error_code([&] { m.discriminate(Matrix::Zero(4, 100)); }) == "ShapeMismatch");
  Matrix bad = Matrix::Zero(4, 513);
  bad(2, 9) = std::nan("");
  CHECK(error_code([&] { m.discriminate(bad); }) == "NonFiniteOutput");
  VcArch broken = tiny_arch();
  broken.decoder_crops = {3, 2, 1};
  CHECK(error_code([&] { VcModel bad_model(broken); }) == "InvalidConfig");
}

TEST_CASE("encoding: inference is deterministic, training reparameterises") {
  VcModel m(tiny_arch(), 4);
  std::mt19937_64 rng(3);
  const Matrix x = normal(5, 513, rng, -6.0);
  const auto a = m.encode(x);
  const auto b = m.encode(x);
  CHECK(a.sample == b.sample);
  CHECK(a.sample == a.mu);

  nn::Rng r1(77), r2(77);
  const auto t = m.encode(x, &r1);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix expect(t.mu.rows(), t.mu.cols());
  for (Eigen::Index i = 0; i < expect.rows(); ++i)
    for (Eigen::Index j = 0; j < expect.cols(); ++j) {
      const double eps = n(r2);
      expect(i, j) = t.mu(i, j) + std::exp(t.log_var(i, j) / 2.0) * eps;
    }
  CHECK((t.sample - expect).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("closed-form KL and reconstruction error") {
  CHECK(gaussian_kl(Matrix::Zero(3, 128), Matrix::Zero(3, 128)) == 0.0);
  std::mt19937_64 rng(5);
  for (int r = 0; r < 20; ++r) {
    const Matrix mu = normal(3, 6, rng), lv = normal(3, 6, rng, 0.0, 0.7);
    const double kl = gaussian_kl(mu, lv);
    CHECK(std::fabs(kl - kl_brute_force(mu, lv)) < 1e-9);
    CHECK(kl >= 0.0);
  }
  const Matrix x = normal(4, 513, rng);
  CHECK(reconstruction_error(x, x) == 0.0);
  CHECK(reconstruction_error(x, x.array() + 2.0) == doctest::Approx(4.0));
}

TEST_CASE("gradient check on a tiny model") {
  VcModel m(tiny_arch(), 6);
  std::mt19937_64 rng(7);
  const auto batch = random_batch(3, rng);
  CHECK(m.gradient_check(batch, GradientObjective::kKl, 11) < 1e-3);
  CHECK(m.gradient_check(random_batch(1, rng), GradientObjective::kRecon, 12) < 1e-3);
  CHECK(m.gradient_check(batch, GradientObjective::kBoth, 13, 20) < 1e-3);
}

TEST_CASE("gradient-penalty gradient matches brute-force differences") {
  VcModel m(tiny_arch(), 8);
  std::mt19937_64 rng(9);
  CHECK(m.penalty_gradient_check(normal(4, 513, rng, -6.0), 21, 20) < 1e-3);
}

TEST_CASE("loss terms are finite and reproducible") {
  VcModel m(tiny_arch(), 10);
  std::mt19937_64 rng(11);
  const auto batch = random_batch(6, rng);
  nn::Rng r1(5), r2(5);
  const auto a = m.loss_terms(batch, r1);
  const auto b = m.loss_terms(batch, r2);
  CHECK(a.kl == b.kl);
  CHECK(a.recon == b.recon);
  CHECK(a.adv_d == b.adv_d);
  CHECK(a.kl >= 0.0);
  CHECK(a.recon > 0.0);
  CHECK(std::isfinite(a.adv_g));
}

TEST_CASE("f0 conditioning scale") {
  VcModel m(tiny_arch());
  m.set_f0_range(std::log(100.0), std::log(400.0));
  Vector f0(4);
  f0 << 0.0, 100.0, 200.0, 1000.0;
  const Vector c = m.f0_condition(f0);
  CHECK(c(0) == 0.0);
  CHECK(c(1) == 0.0);
  CHECK(c(2) == doctest::Approx(0.5));
  CHECK(c(3) == 1.0);
}

TEST_CASE("training: errors, schedule, log header and determinism") {
  CHECK(error_code([] { train_vc(VcTrainingData{}, VcTrainConfig{}, tiny_arch()); }) == "EmptyTrainSet");
  std::mt19937_64 rng(12);
  const auto data = synthetic_frames(3, 40, rng);
  VcTrainConfig cfg;
  cfg.epochs = 3;
  cfg.vae_epochs = 1;
  cfg.batch_size = 16;
  cfg.n_critic = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  const auto a = train_vc(data, cfg, tiny_arch());
  const auto b = train_vc(data, cfg, tiny_arch());
  REQUIRE(a.training_log().size() == 3);
  CHECK(std::isnan(a.training_log()[0].adv_g));
  CHECK(std::isfinite(a.training_log()[1].adv_d));
  CHECK(a.training_log()[0].recon == b.training_log()[0].recon);
  CHECK(a.training_log()[2].adv_d == b.training_log()[2].adv_d);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.training_log()[0].recon > a.training_log()[2].recon);
  CHECK(training_log_header(VcTrainConfig{}) == "# epochs=45 batch=256 lr=1e-05 seed=1");
}

TEST_CASE("conversion checkpoint round trip") {
  testing::TempDir dir("vc_ckpt");
  std::mt19937_64 rng(13);
  VcTrainConfig cfg;
  cfg.epochs = 2;
  cfg.vae_epochs = 1;
  cfg.batch_size = 32;
  cfg.n_critic = 1;
  const auto m = train_vc(synthetic_frames(2, 30, rng), cfg, tiny_arch());
  m.save(dir.path());
  const auto back = VcModel::load(dir.path());
  CHECK(back.checksum() == m.checksum());
  CHECK(back.f0_range() == m.f0_range());
  REQUIRE(back.training_log().size() == 2);
  CHECK(back.training_log()[1].recon == m.training_log()[1].recon);
  CHECK(std::isnan(back.training_log()[0].adv_g));
  const Matrix x = normal(3, 513, rng, -6.0);
  CHECK(back.encode(x).mu == m.encode(x).mu);

  std::ifstream log(dir / "training_log.csv");
  std::string header, columns;
  std::getline(log, header);
  std::getline(log, columns);
  CHECK(header == "# epochs=2 batch=32 lr=1e-05 seed=1");
  CHECK(columns == "epoch,kl,recon,adv_g,adv_d");
  CHECK(error_code([&] { VcModel::load(dir / "none"); }) == "MissingCheckpoint");
}
