// Vocoder analysis and synthesis on a fixed 16 kHz / 5 ms / 1024-point grid.
//
// The envelope estimator and the synthesis loop follow the structure of the
// WORLD vocoder (CheapTrick smoothing with cepstral recovery; pitch-synchronous
// minimum-phase pulses plus shaped noise). F0 comes from a cumulative-mean-
// normalised difference tracker and aperiodicity from harmonic peak/valley
// ratios, both simpler than their WORLD counterparts.
#include "deepest/vocoder.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>

#include "deepest/error.hpp"
#include "deepest/fft.hpp"

namespace deepest {
namespace {

using Complex = std::complex<double>;

constexpr double kPi = std::numbers::pi;
constexpr double kEps = 2.220446049250313e-16;
constexpr double kDefaultF0 = 500.0;
constexpr double kCompensationQ1 = -0.15;
constexpr double kSafeGuardMinimum = 1e-12;
constexpr double kApFloor = 1e-4;

double cheaptrick_f0_floor() { return 3.0 * kSampleRate / (kFftSize - 3.0); }

// Linear interpolation of y sampled at origin + i * step; clamps at the ends.
double interp_uniform(std::span<const double> y, double origin, double step, double x) {
  const double pos = (x - origin) / step;
  if (pos <= 0.0) return y.front();
  const auto i = static_cast<std::size_t>(pos);
  if (i + 1 >= y.size()) return y.back();
  const double frac = pos - static_cast<double>(i);
  return y[i] + (y[i + 1] - y[i]) * frac;
}

double sample_at(std::span<const double> x, long index) {
  return x[static_cast<std::size_t>(std::clamp<long>(index, 0, static_cast<long>(x.size()) - 1))];
}

class CheapTrick {
 public:
  CheapTrick() : fft_(kFftSize), frame_(kFftSize), power_(kSpectrumBins), work_(kFftSize) {}

  void envelope(std::span<const double> x, double f0, long center, double* out) {
    windowed_waveform(x, f0, center);
    power_spectrum(f0);
    linear_smoothing(2.0 * f0 / 3.0);
    smoothing_with_recovery(f0, out);
  }

 private:
  void windowed_waveform(std::span<const double> x, double f0, long center) {
    const long half = std::lround(1.5 * kSampleRate / f0);
    const std::size_t length = static_cast<std::size_t>(2 * half + 1);
    window_.resize(length);
    double norm = 0.0;
    for (long i = -half; i <= half; ++i) {
      const double position = (static_cast<double>(i) / 1.5) / kSampleRate;
      const double w = 0.5 * std::cos(kPi * position * f0) + 0.5;
      window_[static_cast<std::size_t>(i + half)] = w;
      norm += w * w;
    }
    norm = std::sqrt(norm);
    double weighted_sum = 0.0, window_sum = 0.0;
    std::fill(frame_.begin(), frame_.end(), 0.0);
    for (std::size_t j = 0; j < length; ++j) {
      window_[j] /= norm;
      frame_[j] = sample_at(x, center + static_cast<long>(j) - half) * window_[j];
      weighted_sum += frame_[j];
      window_sum += window_[j];
    }
    const double dc = weighted_sum / window_sum;
    for (std::size_t j = 0; j < length; ++j) frame_[j] -= window_[j] * dc;
  }

  void power_spectrum(double f0) {
    fft_.forward(frame_, spectrum_);
    for (int k = 0; k < kSpectrumBins; ++k) power_[k] = std::norm(spectrum_[k]);

    // Fold the energy below f0 back onto itself (negative-frequency replica).
    const int upper = 2 + static_cast<int>(f0 * kFftSize / kSampleRate);
    const double df = static_cast<double>(kSampleRate) / kFftSize;
    replica_.assign(static_cast<std::size_t>(upper - 1), 0.0);
    for (int i = 0; i < upper - 1; ++i)
      replica_[i] = interp_uniform(power_, 0.0, df, f0 - i * df);
    for (int i = 0; i < upper - 1 && i < kSpectrumBins; ++i) power_[i] += replica_[i];
  }

  // Rectangular smoothing of the power spectrum with the given width in Hz.
  void linear_smoothing(double width) {
    const int half_n = kFftSize / 2;
    const int boundary = static_cast<int>(width * kFftSize / kSampleRate) + 1;
    const double df = static_cast<double>(kSampleRate) / kFftSize;
    const std::size_t total = static_cast<std::size_t>(half_n + 2 * boundary + 1);
    mirror_.resize(total);
    for (int i = 0; i < boundary; ++i) mirror_[i] = power_[boundary - i];
    for (int i = boundary; i < half_n + boundary; ++i) mirror_[i] = power_[i - boundary];
    for (int i = half_n + boundary; i <= half_n + 2 * boundary; ++i)
      mirror_[i] = power_[half_n - (i - (half_n + boundary))];
    segment_.resize(total);
    segment_[0] = mirror_[0] * df;
    for (std::size_t i = 1; i < total; ++i) segment_[i] = segment_[i - 1] + mirror_[i] * df;

    const double origin = -(static_cast<double>(boundary) - 0.5) * df;
    for (int k = 0; k < kSpectrumBins; ++k) {
      const double f = k * df - width / 2.0;
      const double low = interp_uniform(segment_, origin, df, f);
      const double high = interp_uniform(segment_, origin, df, f + width);
      power_[k] = std::max(0.0, (high - low) / width) + kEps;
    }
  }

  void smoothing_with_recovery(double f0, double* out) {
    for (int k = 0; k < kSpectrumBins; ++k) work_[k] = std::log(power_[k]);
    for (int k = 1; k < kFftSize / 2; ++k) work_[kFftSize - k] = work_[k];
    fft_.forward(work_, spectrum_);
    for (int k = 0; k < kSpectrumBins; ++k) {
      double lifter = 1.0;
      double compensation = 1.0;
      if (k > 0) {
        const double quefrency = static_cast<double>(k) / kSampleRate;
        lifter = std::sin(kPi * f0 * quefrency) / (kPi * f0 * quefrency);
        compensation = (1.0 - 2.0 * kCompensationQ1) +
                       2.0 * kCompensationQ1 * std::cos(2.0 * kPi * quefrency * f0);
      }
      spectrum_[k] = Complex(spectrum_[k].real() * lifter * compensation, 0.0);
    }
    fft_.inverse(spectrum_, work_);
    for (int k = 0; k < kSpectrumBins; ++k) out[k] = std::exp(work_[k]);
  }

  RealFft fft_;
  std::vector<double> frame_, window_, power_, work_, replica_, mirror_, segment_;
  std::vector<Complex> spectrum_;
};

class MinimumPhase {
 public:
  MinimumPhase() : fft_(kFftSize), cepstrum_(kFftSize) {}

  // log_amplitude holds ln|H| on the 513 one-sided bins.
  void compute(std::span<const double> log_amplitude, std::vector<Complex>& out) {
    buffer_.resize(kSpectrumBins);
    for (int k = 0; k < kSpectrumBins; ++k) buffer_[k] = Complex(log_amplitude[k], 0.0);
    fft_.inverse(buffer_, cepstrum_);
    for (int n = 1; n < kFftSize / 2; ++n) cepstrum_[n] *= 2.0;
    for (int n = kFftSize / 2 + 1; n < kFftSize; ++n) cepstrum_[n] = 0.0;
    fft_.forward(cepstrum_, out);
    for (auto& c : out) c = std::exp(c);
  }

 private:
  RealFft fft_;
  std::vector<double> cepstrum_;
  std::vector<Complex> buffer_;
};

void fftshift(const std::vector<double>& in, std::vector<double>& out) {
  const std::size_t half = in.size() / 2;
  out.resize(in.size());
  for (std::size_t i = 0; i < half; ++i) {
    out[i] = in[i + half];
    out[i + half] = in[i];
  }
}

std::vector<double> dc_remover() {
  std::vector<double> r(kFftSize);
  double dc = 0.0;
  for (int i = 0; i < kFftSize / 2; ++i) {
    r[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 1.0) / (1.0 + kFftSize));
    r[kFftSize - i - 1] = r[i];
    dc += r[i] * 2.0;
  }
  for (int i = 0; i < kFftSize / 2; ++i) {
    r[i] /= dc;
    r[kFftSize - i - 1] = r[i];
  }
  return r;
}

struct Pulse {
  long index;
  double time;        // seconds
  double time_shift;  // fractional part below one sample, seconds
  bool voiced;
};

std::vector<Pulse> pulse_locations(const Vector& f0, int y_length) {
  const int frames = static_cast<int>(f0.size());
  const double period = kFramePeriodMs / 1000.0;
  const double lowest_f0 = static_cast<double>(kSampleRate) / kFftSize + 1.0;

  std::vector<double> coarse_f0(static_cast<std::size_t>(frames) + 1);
  std::vector<double> coarse_vuv(static_cast<std::size_t>(frames) + 1);
  for (int i = 0; i < frames; ++i) {
    coarse_f0[i] = f0[i] < lowest_f0 ? 0.0 : f0[i];
    coarse_vuv[i] = coarse_f0[i] == 0.0 ? 0.0 : 1.0;
  }
  if (frames >= 2) {
    coarse_f0[frames] = coarse_f0[frames - 1] * 2 - coarse_f0[frames - 2];
    coarse_vuv[frames] = coarse_vuv[frames - 1] * 2 - coarse_vuv[frames - 2];
  } else {
    coarse_f0[frames] = coarse_f0[frames - 1];
    coarse_vuv[frames] = coarse_vuv[frames - 1];
  }

  std::vector<double> f0_i(static_cast<std::size_t>(y_length));
  std::vector<bool> vuv_i(static_cast<std::size_t>(y_length));
  for (int i = 0; i < y_length; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double v = interp_uniform(coarse_vuv, 0.0, period, t);
    vuv_i[i] = v > 0.5;
    f0_i[i] = vuv_i[i] ? interp_uniform(coarse_f0, 0.0, period, t) : kDefaultF0;
  }

  std::vector<Pulse> pulses;
  double total_phase = 2.0 * kPi * f0_i[0] / kSampleRate;
  double previous_wrap = std::fmod(total_phase, 2.0 * kPi);
  for (int i = 1; i < y_length; ++i) {
    total_phase += 2.0 * kPi * f0_i[i] / kSampleRate;
    const double wrap = std::fmod(total_phase, 2.0 * kPi);
    if (std::fabs(wrap - previous_wrap) > kPi) {
      const double y1 = previous_wrap - 2.0 * kPi;
      const double y2 = wrap;
      const double x = -y1 / (y2 - y1);
      pulses.push_back({i - 1, static_cast<double>(i - 1) / kSampleRate, x / kSampleRate,
                        static_cast<bool>(vuv_i[i - 1])});
    }
    previous_wrap = wrap;
  }
  return pulses;
}

void interpolate_frames(const Matrix& m, double time, double* out) {
  const int frames = static_cast<int>(m.rows());
  const double period = kFramePeriodMs / 1000.0;
  const int lo = std::min(frames - 1, static_cast<int>(std::floor(time / period)));
  const int hi = std::min(frames - 1, static_cast<int>(std::ceil(time / period)));
  const double a = time / period - lo;
  for (int k = 0; k < kSpectrumBins; ++k)
    out[k] = lo == hi ? m(lo, k) : (1.0 - a) * m(lo, k) + a * m(hi, k);
}

std::vector<double> blackman(std::size_t length) {
  std::vector<double> w(length);
  const double denom = static_cast<double>(length - 1);
  for (std::size_t i = 0; i < length; ++i) {
    const double p = static_cast<double>(i) / denom;
    w[i] = 0.42 - 0.5 * std::cos(2.0 * kPi * p) + 0.08 * std::cos(4.0 * kPi * p);
  }
  return w;
}

}  // namespace

void validate(const FeatureSet& f) {
  const int frames = f.frames();
  if (frames == 0) fail("InvalidFeatures", "feature set has no frames");
  if (f.sp.rows() != frames || f.ap.rows() != frames)
    fail("InvalidFeatures", "f0, sp and ap frame counts differ");
  if (f.sp.cols() != kSpectrumBins || f.ap.cols() != kSpectrumBins)
    fail("InvalidFeatures", "sp/ap must have 513 bins");
  if (f.fft_size != kFftSize || f.sample_rate != kSampleRate || f.frame_period_ms != kFramePeriodMs)
    fail("InvalidFeatures", "only 16 kHz, 1024-point, 5 ms features are supported");
  for (int t = 0; t < frames; ++t) {
    if (!std::isfinite(f.f0[t]) || f.f0[t] < 0.0)
      fail("InvalidFeatures", "f0 must be finite and non-negative (frame " + std::to_string(t) + ")");
    for (int k = 0; k < kSpectrumBins; ++k) {
      if (!(f.sp(t, k) > 0.0) || !std::isfinite(f.sp(t, k)))
        fail("InvalidFeatures", "sp must be finite and positive (frame " + std::to_string(t) + ")");
      if (!(f.ap(t, k) >= 0.0 && f.ap(t, k) <= 1.0))
        fail("InvalidFeatures", "ap must lie in [0, 1] (frame " + std::to_string(t) + ")");
    }
  }
}

Vector estimate_f0(std::span<const double> x, int sample_rate, const F0Options& opt) {
  if (sample_rate != kSampleRate)
    fail("UnsupportedSampleRate", "expected 16000 Hz, got " + std::to_string(sample_rate));
  const int frames = frame_count(x.size());
  const int tau_min = static_cast<int>(std::floor(sample_rate / opt.ceil_hz));
  const int tau_max = static_cast<int>(std::ceil(sample_rate / opt.floor_hz));
  const int w = opt.window;
  Vector f0 = Vector::Zero(frames);

  // Frame energies for the silence gate.
  std::vector<double> energy(static_cast<std::size_t>(frames));
  double loudest = 0.0;
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * kHopSamples - w / 2;
    double e = 0.0;
    for (int j = 0; j < w; ++j) {
      const long i = start + j;
      if (i >= 0 && i < static_cast<long>(x.size())) e += x[i] * x[i];
    }
    energy[t] = e / w;
    loudest = std::max(loudest, energy[t]);
  }
  const double gate = std::max(1e-10, loudest * std::pow(10.0, opt.silence_db / 10.0));

  std::vector<double> seg(static_cast<std::size_t>(w + tau_max + 1));
  std::vector<double> diff(static_cast<std::size_t>(tau_max + 2));
  std::vector<double> cmnd(static_cast<std::size_t>(tau_max + 2));
  for (int t = 0; t < frames; ++t) {
    if (energy[t] < gate) continue;
    // Near the edges the segment slides inward instead of reading zeros.
    const long latest = std::max(0L, static_cast<long>(x.size()) - static_cast<long>(seg.size()));
    const long start =
        std::clamp(static_cast<long>(t) * kHopSamples - (w + tau_max) / 2, 0L, latest);
    for (std::size_t j = 0; j < seg.size(); ++j) {
      const long i = start + static_cast<long>(j);
      seg[j] = (i >= 0 && i < static_cast<long>(x.size())) ? x[i] : 0.0;
    }
    diff[0] = 0.0;
    for (int tau = 1; tau <= tau_max + 1; ++tau) {
      double d = 0.0;
      for (int j = 0; j < w; ++j) {
        const double delta = seg[j] - seg[j + tau];
        d += delta * delta;
      }
      diff[tau] = d;
    }
    cmnd[0] = 1.0;
    double running = 0.0;
    for (int tau = 1; tau <= tau_max + 1; ++tau) {
      running += diff[tau];
      cmnd[tau] = running > 0.0 ? diff[tau] * tau / running : 1.0;
    }
    // First dip under the threshold, else the global minimum if it is still
    // periodic enough to count as voiced.
    int best = -1;
    for (int tau = std::max(tau_min, 2); tau <= tau_max; ++tau) {
      if (cmnd[tau] < opt.threshold) {
        while (tau + 1 <= tau_max && cmnd[tau + 1] < cmnd[tau]) ++tau;
        best = tau;
        break;
      }
    }
    if (best < 0) {
      int lowest = std::max(tau_min, 2);
      for (int tau = lowest + 1; tau <= tau_max; ++tau)
        if (cmnd[tau] < cmnd[lowest]) lowest = tau;
      if (cmnd[lowest] < opt.voicing_threshold) best = lowest;
    }
    if (best < 0) continue;
    // A dip at best / k nearly as deep as the chosen one is the true period;
    // the chosen lag is then a multiple of it.
    for (int k = 4; k >= 2; --k) {
      const int centre = static_cast<int>(std::lround(static_cast<double>(best) / k));
      int dip = -1;
      for (int tau = std::max({tau_min, 2, centre - 2}); tau <= std::min(tau_max, centre + 2); ++tau)
        if (cmnd[tau] <= cmnd[tau - 1] && cmnd[tau] <= cmnd[tau + 1] && (dip < 0 || cmnd[tau] < cmnd[dip]))
          dip = tau;
      if (dip > 0 && cmnd[dip] < std::min(opt.voicing_threshold, cmnd[best] + 0.15)) {
        best = dip;
        break;
      }
    }
    // Parabolic refinement around the dip.
    const double a = cmnd[best - 1], b = cmnd[best], c = cmnd[best + 1];
    const double denom = a - 2.0 * b + c;
    const double shift = std::fabs(denom) > 1e-12 ? 0.5 * (a - c) / denom : 0.0;
    const double period = best + std::clamp(shift, -0.5, 0.5);
    f0[t] = sample_rate / period;
  }

  // Octave jumps against the local median are tracking errors.
  constexpr int kMedianReach = 10;
  Vector corrected = f0;
  std::vector<double> around;
  for (int t = 0; t < frames; ++t) {
    if (f0[t] <= 0.0) continue;
    around.clear();
    for (int s = std::max(0, t - kMedianReach); s <= std::min(frames - 1, t + kMedianReach); ++s)
      if (f0[s] > 0.0) around.push_back(std::log2(f0[s]));
    if (around.size() < 5) continue;
    std::nth_element(around.begin(), around.begin() + around.size() / 2, around.end());
    const double octaves = around[around.size() / 2] - std::log2(f0[t]);
    const double jump = std::round(octaves);
    if (jump != 0.0 && std::fabs(octaves - jump) < 0.25) {
      const double fixed = f0[t] * std::exp2(jump);
      if (fixed >= opt.floor_hz && fixed <= opt.ceil_hz) corrected[t] = fixed;
    }
  }

  // One- or two-frame dropouts between agreeing voiced neighbours are filled
  // in log frequency; isolated voiced frames are dropped.
  constexpr int kMaxGap = 2;
  Vector cleaned = corrected;
  for (int t = 1; t < frames; ++t) {
    if (corrected[t] > 0.0 || corrected[t - 1] <= 0.0) continue;
    int end = t;
    while (end < frames && corrected[end] <= 0.0 && end - t < kMaxGap) ++end;
    if (end >= frames || corrected[end] <= 0.0) continue;
    const double a = std::log(corrected[t - 1]), b = std::log(corrected[end]);
    if (std::fabs(a - b) > 0.15) continue;
    bool audible = true;
    for (int s = t; s < end; ++s) audible = audible && energy[s] >= gate;
    if (!audible) continue;
    for (int s = t; s < end; ++s) {
      const double w = static_cast<double>(s - t + 1) / (end - t + 1);
      cleaned[s] = std::exp((1.0 - w) * a + w * b);
    }
    t = end;
  }
  Vector result = cleaned;
  for (int t = 0; t < frames; ++t) {
    const bool left = t > 0 && cleaned[t - 1] > 0.0;
    const bool right = t + 1 < frames && cleaned[t + 1] > 0.0;
    if (cleaned[t] > 0.0 && !left && !right) result[t] = 0.0;
  }
  return result;
}

Matrix estimate_spectral_envelope(std::span<const double> x, const Vector& f0) {
  const int frames = static_cast<int>(f0.size());
  Matrix sp(frames, kSpectrumBins);
  CheapTrick cheaptrick;
  const double floor_f0 = cheaptrick_f0_floor();
  for (int t = 0; t < frames; ++t) {
    const double current = f0[t] <= floor_f0 ? kDefaultF0 : f0[t];
    cheaptrick.envelope(x, current, static_cast<long>(t) * kHopSamples, sp.row(t).data());
  }
  return sp;
}

Matrix estimate_aperiodicity(std::span<const double> x, const Vector& f0) {
  const int frames = static_cast<int>(f0.size());
  Matrix ap = Matrix::Ones(frames, kSpectrumBins);
  RealFft fft(kFftSize);
  std::vector<double> frame(kFftSize);
  std::vector<Complex> spectrum;
  std::vector<double> power(kSpectrumBins);
  const double bins_per_hz = static_cast<double>(kFftSize) / kSampleRate;

  for (int t = 0; t < frames; ++t) {
    if (f0[t] <= 0.0) continue;
    const double current = f0[t];
    const long half = std::min<long>(kFftSize / 2 - 1, std::lround(3.0 * kSampleRate / current));
    const auto window = blackman(static_cast<std::size_t>(2 * half + 1));
    std::fill(frame.begin(), frame.end(), 0.0);
    const long center = static_cast<long>(t) * kHopSamples;
    for (long j = -half; j <= half; ++j)
      frame[static_cast<std::size_t>(j + half)] = sample_at(x, center + j) * window[j + half];
    fft.forward(frame, spectrum);
    for (int k = 0; k < kSpectrumBins; ++k) power[k] = std::norm(spectrum[k]) + kSafeGuardMinimum;

    auto bin = [&](double hz) {
      return std::clamp(static_cast<int>(std::lround(hz * bins_per_hz)), 0, kSpectrumBins - 1);
    };
    auto peak = [&](int h) {
      double m = 0.0;
      for (int k = bin((h - 0.25) * current); k <= bin((h + 0.25) * current); ++k)
        m = std::max(m, power[k]);
      return m;
    };
    std::vector<double> centers, log_ratio;
    for (int h = 1; (h + 1) * current < kSampleRate / 2.0; ++h) {
      double valley = std::numeric_limits<double>::infinity();
      for (int k = bin((h + 0.35) * current); k <= bin((h + 0.65) * current); ++k)
        valley = std::min(valley, power[k]);
      const double ratio = std::clamp(valley / std::sqrt(peak(h) * peak(h + 1)), kApFloor, 1.0);
      centers.push_back((h + 0.5) * current);
      log_ratio.push_back(std::log(ratio));
    }
    if (centers.empty()) continue;
    std::size_t seg = 0;
    for (int k = 0; k < kSpectrumBins; ++k) {
      const double hz = k / bins_per_hz;
      double value;
      if (hz <= centers.front()) {
        value = log_ratio.front();
      } else if (hz >= centers.back()) {
        value = log_ratio.back();
      } else {
        while (centers[seg + 1] < hz) ++seg;
        const double a = (hz - centers[seg]) / (centers[seg + 1] - centers[seg]);
        value = (1.0 - a) * log_ratio[seg] + a * log_ratio[seg + 1];
      }
      ap(t, k) = std::exp(value);
    }
  }
  return ap;
}

FeatureSet analyze(std::span<const double> waveform, int sample_rate, const F0Options& options) {
  if (waveform.empty()) fail("EmptyWaveform", "cannot analyse an empty waveform");
  if (sample_rate != kSampleRate)
    fail("UnsupportedSampleRate", "expected 16000 Hz, got " + std::to_string(sample_rate));
  FeatureSet f;
  f.f0 = estimate_f0(waveform, sample_rate, options);
  f.sp = estimate_spectral_envelope(waveform, f.f0);
  f.ap = estimate_aperiodicity(waveform, f.f0);
  return f;
}

std::vector<double> synthesize(const FeatureSet& features, const SynthesisOptions& options) {
  validate(features);
  const int y_length = features.frames() * kHopSamples;
  std::vector<double> y(static_cast<std::size_t>(y_length), 0.0);
  const auto pulses = pulse_locations(features.f0, y_length);

  RealFft fft(kFftSize);
  MinimumPhase minimum_phase;
  const auto remover = dc_remover();
  std::mt19937_64 rng(options.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> envelope(kSpectrumBins), ratio(kSpectrumBins), log_amp(kSpectrumBins);
  std::vector<Complex> min_phase, spectrum, noise_spectrum;
  std::vector<double> time_domain, periodic(kFftSize), aperiodic(kFftSize), noise;

  for (std::size_t p = 0; p < pulses.size(); ++p) {
    const Pulse& pulse = pulses[p];
    const long noise_size = pulses[std::min(pulses.size() - 1, p + 1)].index - pulse.index;
    interpolate_frames(features.sp, pulse.time, envelope.data());
    interpolate_frames(features.ap, pulse.time, ratio.data());

    // Periodic part.
    std::fill(periodic.begin(), periodic.end(), 0.0);
    if (pulse.voiced && ratio[0] <= 0.999) {
      for (int k = 0; k < kSpectrumBins; ++k)
        log_amp[k] = std::log(envelope[k] * (1.0 - ratio[k]) + kSafeGuardMinimum) / 2.0;
      minimum_phase.compute(log_amp, min_phase);
      const double coefficient = 2.0 * kPi * pulse.time_shift * kSampleRate / kFftSize;
      for (int k = 0; k < kSpectrumBins; ++k)
        min_phase[k] *= std::polar(1.0, -coefficient * k);
      fft.inverse(min_phase, time_domain);
      fftshift(time_domain, periodic);
      double dc = 0.0;
      for (int i = kFftSize / 2; i < kFftSize; ++i) dc += periodic[i];
      for (int i = 0; i < kFftSize; ++i) periodic[i] -= dc * remover[i];
    }

    // Aperiodic part: white noise shaped by the minimum-phase envelope.
    std::fill(aperiodic.begin(), aperiodic.end(), 0.0);
    if (noise_size > 0) {
      noise.resize(static_cast<std::size_t>(noise_size));
      double mean = 0.0;
      for (auto& v : noise) {
        v = gauss(rng);
        mean += v;
      }
      mean /= static_cast<double>(noise_size);
      for (auto& v : noise) v -= mean;
      for (int k = 0; k < kSpectrumBins; ++k) {
        const double share = pulse.voiced ? ratio[k] : 1.0;
        log_amp[k] = std::log(envelope[k] * share + kSafeGuardMinimum) / 2.0;
      }
      minimum_phase.compute(log_amp, min_phase);
      fft.forward(noise, noise_spectrum);
      for (int k = 0; k < kSpectrumBins; ++k) noise_spectrum[k] *= min_phase[k];
      fft.inverse(noise_spectrum, time_domain);
      fftshift(time_domain, aperiodic);
    }

    const double sqrt_noise = std::sqrt(static_cast<double>(std::max<long>(noise_size, 0)));
    const long offset = pulse.index - kFftSize / 2 + 1;
    const long lower = std::max<long>(0, -offset);
    const long upper = std::min<long>(kFftSize, y_length - offset);
    for (long j = lower; j < upper; ++j)
      y[static_cast<std::size_t>(j + offset)] += periodic[j] * sqrt_noise + aperiodic[j];
  }

  double peak = 0.0;
  for (double v : y) peak = std::max(peak, std::fabs(v));
  if (peak > options.peak_limit)
    for (double& v : y) v *= options.peak_limit / peak;
  return y;
}

}  // namespace deepest
