#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

#include "common.hpp"
#include "deepest/distortion.hpp"
#include "deepest/feature_cache.hpp"
#include "deepest/prosody.hpp"
#include "deepest/spectral.hpp"
#include "deepest/vocoder.hpp"

using namespace deepest;
using testing::error_code;

namespace {

Matrix random_positive(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-12.0, 4.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::exp(u(rng));
  return m;
}

MCEPTrack random_track(int frames, std::mt19937_64& rng, int order = 24) {
  std::normal_distribution<double> n(0.0, 0.5);
  MCEPTrack t;
  t.order = order;
  t.coeffs.resize(frames, order + 1);
  for (Eigen::Index i = 0; i < t.coeffs.size(); ++i) t.coeffs.data()[i] = n(rng);
  return t;
}

double frame_distance(const MCEPTrack& a, int i, const MCEPTrack& b, int j) {
  double s = 0.0;
  for (int k = 1; k <= a.order; ++k) s += std::pow(a.coeffs(i, k) - b.coeffs(j, k), 2);
  return std::sqrt(s);
}

// Exhaustive minimum over every monotone path from (0,0) to (Ta-1,Tb-1).
double brute_force_dtw(const MCEPTrack& a, const MCEPTrack& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> walk = [&](int i, int j, double acc) {
    acc += frame_distance(a, i, b, j);
    if (i == a.frames() - 1 && j == b.frames() - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < a.frames()) walk(i + 1, j, acc);
    if (j + 1 < b.frames()) walk(i, j + 1, acc);
    if (i + 1 < a.frames() && j + 1 < b.frames()) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

std::vector<double> sawtooth(double hz, double seconds, double amplitude = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double phase = std::fmod(hz * static_cast<double>(n) / kSampleRate, 1.0);
    x[n] = amplitude * (2.0 * phase - 1.0);
  }
  return x;
}

}  // namespace

TEST_CASE("normalization round trip and constant frames") {
  std::mt19937_64 rng(11);
  const Matrix sp = random_positive(40, kSpectrumBins, rng);
  const auto norm = sp_normalize(sp);
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    CHECK(norm.log_sp.row(t).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(norm.energy(t) == doctest::Approx(sp.row(t).sum()));
  }
  const Matrix back = sp_denormalize(norm);
  CHECK(((back - sp).array().abs() / sp.array()).maxCoeff() < 1e-6);

  const Matrix flat = Matrix::Constant(2, kSpectrumBins, 3.7);
  const auto fn = sp_normalize(flat);
  CHECK(fn.log_sp.cwiseAbs().maxCoeff() == doctest::Approx(std::log(513.0)).epsilon(1e-12));
  CHECK(fn.log_sp.maxCoeff() == doctest::Approx(-6.2405).epsilon(1e-4));
}

TEST_CASE("denormalization scales with energy") {
  std::mt19937_64 rng(12);
  auto norm = sp_normalize(random_positive(5, kSpectrumBins, rng));
  const Matrix once = sp_denormalize(norm);
  norm.energy *= 2.0;
  CHECK((sp_denormalize(norm) - 2.0 * once).cwiseAbs().maxCoeff() < 1e-9 * once.maxCoeff());
  norm.energy.setOnes();
  CHECK((sp_denormalize(norm) - norm.log_sp.array().exp().matrix()).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalization rejects non-positive bins") {
  Matrix sp = Matrix::Ones(3, kSpectrumBins);
  sp(1, 7) = 0.0;
  CHECK(error_code([&] { sp_normalize(sp); }) == "NonPositiveSpectrum");
}

TEST_CASE("mcd constant and identity") {
  CHECK(kMcdScale == doctest::Approx(10.0 * std::sqrt(2.0) / std::log(10.0)).epsilon(1e-15));
  MCEPTrack a;
  a.coeffs = Matrix::Zero(1, 25);
  MCEPTrack b = a;
  b.coeffs(0, 1) = 1.0;
  CHECK(std::fabs(mcd(a, b, true) - 6.1418) < 1e-4);
  CHECK(mcd(a, b, false) == doctest::Approx(kMcdScale));
  std::mt19937_64 rng(13);
  const auto t = random_track(30, rng);
  CHECK(mcd(t, t) == 0.0);
  CHECK(mcd(t, t, true) == 0.0);
  // c0 is excluded.
  auto shifted = t;
  shifted.coeffs.col(0).array() += 5.0;
  CHECK(mcd(t, shifted, true) == 0.0);
}

TEST_CASE("mcd is symmetric and non-negative") {
  std::mt19937_64 rng(14);
  for (int r = 0; r < 20; ++r) {
    const auto a = random_track(5 + r, rng);
    const auto b = random_track(9 + r % 4, rng);
    const double ab = mcd(a, b), ba = mcd(b, a);
    CHECK(ab > 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  }
}

TEST_CASE("mcd errors") {
  std::mt19937_64 rng(15);
  const auto a = random_track(4, rng);
  MCEPTrack empty;
  empty.coeffs.resize(0, 25);
  CHECK(error_code([&] { mcd(a, empty); }) == "EmptyTrack");
  CHECK(error_code([&] { dtw_align(empty, a); }) == "EmptyTrack");
  CHECK(error_code([&] { mcd(a, random_track(4, rng, 12)); }) == "OrderMismatch");
  CHECK(error_code([&] { mcd(a, random_track(5, rng), true); }) == "LengthMismatch");
}

TEST_CASE("dtw matches exhaustive enumeration on short tracks") {
  std::mt19937_64 rng(16);
  std::uniform_int_distribution<int> len(1, 6);
  int cases = 0;
  for (int r = 0; r < 150; ++r) {
    const auto a = random_track(len(rng), rng);
    const auto b = random_track(len(rng), rng);
    const auto al = dtw_align(a, b);
    CHECK(al.cost == doctest::Approx(brute_force_dtw(a, b)).epsilon(1e-12));
    // Path is monotone with unit steps and its summed cost is the reported cost.
    REQUIRE(!al.path.empty());
    CHECK(al.path.front() == std::pair{0, 0});
    CHECK(al.path.back() == std::pair{a.frames() - 1, b.frames() - 1});
    double along = frame_distance(a, 0, b, 0);
    for (std::size_t k = 1; k < al.path.size(); ++k) {
      const int di = al.path[k].first - al.path[k - 1].first;
      const int dj = al.path[k].second - al.path[k - 1].second;
      CHECK((di | dj) == 1);
      CHECK(di >= 0);
      CHECK(dj >= 0);
      along += frame_distance(a, al.path[k].first, b, al.path[k].second);
    }
    CHECK(along == doctest::Approx(al.cost).epsilon(1e-12));
    ++cases;
  }
  CHECK(cases >= 100);
}

TEST_CASE("dtw of identical tracks is the diagonal") {
  std::mt19937_64 rng(17);
  const auto a = random_track(8, rng);
  const auto al = dtw_align(a, a);
  CHECK(al.cost == 0.0);
  REQUIRE(al.path.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(al.path[i] == std::pair{i, i});
}

TEST_CASE("mcep of flat and scaled spectra") {
  const Matrix flat = Matrix::Constant(1, kSpectrumBins, 0.25);
  const auto m = mcep(flat);
  CHECK(m.coeffs.cols() == 25);
  CHECK(m.coeffs.rightCols(24).cwiseAbs().maxCoeff() < 1e-6);

  std::mt19937_64 rng(18);
  const Matrix sp = random_positive(3, kSpectrumBins, rng);
  const auto a = mcep(sp);
  const auto b = mcep(sp * 7.0);
  CHECK((a.coeffs.rightCols(24) - b.coeffs.rightCols(24)).cwiseAbs().maxCoeff() < 1e-6);
  const Vector dc0 = b.coeffs.col(0) - a.coeffs.col(0);
  CHECK(dc0.maxCoeff() - dc0.minCoeff() < 1e-9);
  CHECK(dc0(0) == doctest::Approx(std::log(7.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("mcep round trip on a speech-like envelope") {
  // Smooth resonant envelope; reconstruction should track it closely.
  Matrix sp(1, kSpectrumBins);
  for (int k = 0; k < kSpectrumBins; ++k) {
    const double f = 8000.0 * k / 512.0;
    double v = 1e-4;
    for (auto [fc, bw] : {std::pair{700.0, 120.0}, {1200.0, 150.0}, {2600.0, 250.0}})
      v += 1.0 / (1.0 + std::pow((f - fc) / bw, 2));
    sp(0, k) = v * std::exp(-f / 3000.0);
  }
  const Matrix rec = mcep_to_log_sp(mcep(sp));
  const Eigen::RowVectorXd target = sp.row(0).array().log();
  const Eigen::RowVectorXd got = rec.row(0);
  const double ma = target.mean(), mb = got.mean();
  const double corr = ((target.array() - ma) * (got.array() - mb)).sum() /
                      std::sqrt((target.array() - ma).square().sum() * (got.array() - mb).square().sum());
  CHECK(corr > 0.99);
}

TEST_CASE("freqt with zero warping is a truncation") {
  const std::vector<double> c = {0.5, -0.2, 0.1, 0.05};
  const Vector w = freqt(c, 3, 0.0);
  for (int i = 0; i < 4; ++i) CHECK(w(i) == doctest::Approx(c[i]).epsilon(1e-12));
}

TEST_CASE("frame count law") {
  for (std::size_t n : {80u, 81u, 16000u, 23999u, 32000u}) {
    const std::vector<double> x(n, 0.0);
    const auto f = analyze(x, kSampleRate);
    CHECK(f.frames() == static_cast<int>(n / 80 + 1));
    CHECK(f.sp.rows() == f.frames());
    CHECK(f.sp.cols() == 513);
    CHECK(f.ap.cols() == 513);
  }
  CHECK(analyze(std::vector<double>(16000, 0.0), kSampleRate).frames() == 201);
}

TEST_CASE("silence is unvoiced and analysis validates inputs") {
  const auto f = analyze(std::vector<double>(8000, 0.0), kSampleRate);
  CHECK(f.f0.cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.sp.minCoeff() > 0.0);
  CHECK(f.ap.minCoeff() >= 0.0);
  CHECK(f.ap.maxCoeff() <= 1.0);
  CHECK(error_code([] { analyze(std::vector<double>{}, kSampleRate); }) == "EmptyWaveform");
  CHECK(error_code([] { analyze(std::vector<double>(100, 0.0), 22050); }) == "UnsupportedSampleRate");
}

TEST_CASE("sawtooth pitch") {
  const auto x = sawtooth(100.0, 1.0);
  const Vector f0 = estimate_f0(x, kSampleRate);
  std::vector<double> voiced;
  for (Eigen::Index t = 0; t < f0.size(); ++t)
    if (f0(t) > 0) voiced.push_back(f0(t));
  REQUIRE(voiced.size() > 150);
  std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
  CHECK(std::fabs(voiced[voiced.size() / 2] - 100.0) < 3.0);
}

TEST_CASE("pitch tracking avoids subharmonics and short dropouts") {
  // Period-doubled pulse train: every other period is attenuated, which
  // deepens the dip at twice the true period.
  std::vector<double> x(kSampleRate);
  const double hz = 300.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double cycles = hz * static_cast<double>(n) / kSampleRate;
    const double phase = std::fmod(cycles, 1.0);
    const double gain = static_cast<long>(cycles) % 2 ? 0.8 : 1.0;
    x[n] = gain * 0.5 * (2.0 * phase - 1.0);
  }
  const Vector f0 = estimate_f0(x, kSampleRate);
  int voiced = 0;
  for (Eigen::Index t = 5; t + 5 < f0.size(); ++t) {
    CHECK(f0(t) > 0.0);
    if (f0(t) > 0.0) {
      ++voiced;
      CHECK(std::fabs(f0(t) / hz - 1.0) < 0.03);
    }
  }
  CHECK(voiced > 180);
}

TEST_CASE("synthesis length, range and errors") {
  const auto x = sawtooth(140.0, 0.5);
  const auto f = analyze(x, kSampleRate);
  const auto y = synthesize(f);
  CHECK(y.size() == static_cast<std::size_t>(f.frames()) * kHopSamples);
  CHECK(std::abs(static_cast<long>(y.size()) - static_cast<long>(f.frames()) * 80) <= 80);
  for (double v : y) {
    CHECK(std::isfinite(v));
    CHECK(std::fabs(v) <= 1.0);
  }
  FeatureSet empty;
  empty.sp.resize(0, 513);
  empty.ap.resize(0, 513);
  CHECK(error_code([&] { synthesize(empty); }) == "InvalidFeatures");
  auto bad = f;
  bad.ap(0, 0) = 1.5;
  CHECK(error_code([&] { synthesize(bad); }) == "InvalidFeatures");
}

TEST_CASE("unvoiced features synthesize noise without pitch") {
  FeatureSet f;
  f.f0 = Vector::Zero(120);
  f.sp = Matrix::Constant(120, 513, 1e-3);
  f.ap = Matrix::Ones(120, 513);
  const auto y = synthesize(f);
  double energy = 0.0;
  for (double v : y) energy += v * v;
  CHECK(energy > 0.0);
  const auto again = analyze(y, kSampleRate);
  CHECK(again.f0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("synthesis is deterministic for a fixed noise seed") {
  const auto f = analyze(sawtooth(120.0, 0.3), kSampleRate);
  CHECK(synthesize(f) == synthesize(f));
}

TEST_CASE("mel volume shape and delta consistency") {
  // 400 Hz puts a whole number of cycles in every 10 ms hop.
  std::vector<double> tone(24000);
  for (std::size_t n = 0; n < tone.size(); ++n)
    tone[n] = 0.3 * std::sin(2 * std::numbers::pi * 400.0 * static_cast<double>(n) / kSampleRate);
  const auto vol = mel_with_deltas(tone);
  CHECK(vol.frames() == 300);
  CHECK(vol.bands() == 40);
  const auto& st = vol.channels[0];
  const double range = st.maxCoeff() - st.minCoeff();
  // 1.5 s of tone = 148 frames, the rest repeats the last frame.
  CHECK(vol.channels[1].middleRows(10, 120).cwiseAbs().maxCoeff() < 1e-3 * range);

  const Matrix dd = deltas(vol.channels[1], 2);
  CHECK((dd - vol.channels[2]).middleRows(4, 292).cwiseAbs().maxCoeff() < 1e-6);

  std::vector<double> longer(16000 * 5, 0.01);
  CHECK(mel_with_deltas(longer).frames() == 300);
  CHECK(error_code([] { mel_with_deltas(std::vector<double>{}); }) == "EmptyWaveform");
}

TEST_CASE("delta regression on a ramp") {
  Matrix ramp(10, 1);
  for (int t = 0; t < 10; ++t) ramp(t, 0) = 3.0 * t;
  const Matrix d = deltas(ramp, 2);
  for (int t = 2; t < 8; ++t) CHECK(d(t, 0) == doctest::Approx(3.0));
}

TEST_CASE("f0 statistics") {
  const std::vector<Vector> two = {(Vector(3) << std::exp(4.0), 0.0, std::exp(6.0)).finished()};
  const auto s = f0_statistics(two);
  CHECK(s.mean_logf0 == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s.std_logf0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.voiced_frames == 2);
  CHECK_FALSE(s.degenerate);

  const std::vector<Vector> flat = {Vector::Constant(10, std::exp(3.0))};
  const auto c = f0_statistics(flat);
  CHECK(c.mean_logf0 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(c.std_logf0 < 1e-8);
  CHECK(c.degenerate);

  const std::vector<Vector> none = {Vector::Zero(10)};
  CHECK(error_code([&] { f0_statistics(none); }) == "NoVoicedFrames");
}

TEST_CASE("feature cache round trip") {
  testing::TempDir dir("cache");
  const auto f = analyze(sawtooth(150.0, 0.2), kSampleRate);
  const auto path = feature_cache_path(dir.path(), "0001_000003");
  write_feature_cache(path, "0001_000003", f);
  const auto back = read_feature_cache(path);
  CHECK(back.utterance_id == "0001_000003");
  CHECK(back.features.f0 == f.f0);
  CHECK(back.features.sp == f.sp);
  CHECK(back.features.ap == f.ap);
  CHECK(error_code([&] { read_feature_cache(dir / "missing.feat"); }) == "MissingCache");
}
