#include "deepest/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "deepest/error.hpp"
#include "deepest/fft.hpp"

namespace deepest {
namespace {

double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

// Triangular HTK-style filters on fft_size/2+1 bins spanning 0..Nyquist.
Matrix mel_filterbank(const MelOptions& o) {
  const int bins = o.fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(o.bands, bins);
  const double low = hz_to_mel(0.0);
  const double high = hz_to_mel(o.sample_rate / 2.0);
  const double step = (high - low) / (o.bands + 1);
  for (int m = 0; m < o.bands; ++m) {
    const double left = low + m * step, center = left + step, right = center + step;
    for (int k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * o.sample_rate / o.fft_size);
      if (mel > left && mel < right)
        fb(m, k) = mel <= center ? (mel - left) / step : (right - mel) / step;
    }
  }
  return fb;
}

}  // namespace

NormalizedSpectrum sp_normalize(const Matrix& sp) {
  NormalizedSpectrum out;
  out.log_sp.resize(sp.rows(), sp.cols());
  out.energy.resize(sp.rows());
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    double sum = 0.0;
    for (Eigen::Index d = 0; d < sp.cols(); ++d) {
      const double v = sp(t, d);
      if (!(v > 0.0) || !std::isfinite(v))
        fail("NonPositiveSpectrum", "frame " + std::to_string(t) + ", bin " + std::to_string(d) +
                                        " is not a positive finite value");
      sum += v;
    }
    out.energy[t] = sum;
    for (Eigen::Index d = 0; d < sp.cols(); ++d) out.log_sp(t, d) = std::log(sp(t, d) / sum);
  }
  return out;
}

Matrix sp_denormalize(const NormalizedSpectrum& norm) {
  if (norm.energy.size() != norm.log_sp.rows())
    fail("ShapeMismatch", "energy length does not match the number of frames");
  Matrix sp(norm.log_sp.rows(), norm.log_sp.cols());
  for (Eigen::Index t = 0; t < sp.rows(); ++t)
    for (Eigen::Index d = 0; d < sp.cols(); ++d)
      sp(t, d) = std::exp(norm.log_sp(t, d)) * norm.energy[t];
  return sp;
}

Matrix log_mel_spectrogram(std::span<const double> x, const MelOptions& o) {
  if (x.empty()) fail("EmptyWaveform", "cannot compute mel features of an empty waveform");
  const int n = static_cast<int>(x.size());
  const int frames = n >= o.window ? 1 + (n - o.window) / o.hop : 1;
  const Matrix fb = mel_filterbank(o);
  RealFft fft(o.fft_size);
  std::vector<double> frame(static_cast<std::size_t>(o.fft_size));
  std::vector<std::complex<double>> spectrum;
  Eigen::VectorXd power(o.fft_size / 2 + 1);
  Matrix out(frames, o.bands);
  for (int t = 0; t < frames; ++t) {
    std::fill(frame.begin(), frame.end(), 0.0);
    const int start = t * o.hop;
    for (int j = 0; j < o.window && j < o.fft_size; ++j) {
      if (start + j >= n) break;
      const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * j / (o.window - 1));
      frame[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(start + j)] * w;
    }
    fft.forward(frame, spectrum);
    for (int k = 0; k < power.size(); ++k) power[k] = std::norm(spectrum[k]);
    const Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < o.bands; ++m) out(t, m) = std::log(std::max(mel[m], 1e-10));
  }
  return out;
}

Matrix deltas(const Matrix& c, int window) {
  const Eigen::Index frames = c.rows();
  double denom = 0.0;
  for (int k = 1; k <= window; ++k) denom += 2.0 * k * k;
  Matrix d = Matrix::Zero(frames, c.cols());
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int k = 1; k <= window; ++k) {
      const Eigen::Index ahead = std::min<Eigen::Index>(frames - 1, t + k);
      const Eigen::Index behind = std::max<Eigen::Index>(0, t - k);
      d.row(t) += k * (c.row(ahead) - c.row(behind));
    }
  }
  return d / denom;
}

MelVolume mel_with_deltas(std::span<const double> waveform, const MelOptions& o) {
  const Matrix full = log_mel_spectrogram(waveform, o);
  const int have = static_cast<int>(full.rows());
  Matrix fixed(o.segment_frames, o.bands);
  if (have >= o.segment_frames) {
    const int start = (have - o.segment_frames) / 2;
    fixed = full.middleRows(start, o.segment_frames);
  } else {
    fixed.topRows(have) = full;
    for (int t = have; t < o.segment_frames; ++t) fixed.row(t) = full.row(have - 1);
  }
  MelVolume v;
  v.channels[0] = fixed;
  v.channels[1] = deltas(fixed, o.delta_window);
  v.channels[2] = deltas(v.channels[1], o.delta_window);
  return v;
}

Vector freqt(std::span<const double> c1, int m2, double a) {
  const double b = 1.0 - a * a;
  Vector g = Vector::Zero(m2 + 1);
  Vector d = Vector::Zero(m2 + 1);
  const int m1 = static_cast<int>(c1.size()) - 1;
  for (int i = -m1; i <= 0; ++i) {
    d = g;
    g[0] = c1[static_cast<std::size_t>(-i)] + a * d[0];
    if (m2 >= 1) g[1] = b * d[0] + a * d[1];
    for (int j = 2; j <= m2; ++j) g[j] = d[j - 1] + a * (d[j] - g[j - 1]);
  }
  return g;
}

MCEPTrack mcep(const Matrix& sp, int order, double alpha) {
  if (order < 1) fail("InvalidArgument", "mel-cepstral order must be >= 1");
  const int bins = static_cast<int>(sp.cols());
  const int fft_size = 2 * (bins - 1);
  RealFft fft(fft_size);
  std::vector<std::complex<double>> log_power(static_cast<std::size_t>(bins));
  std::vector<double> cepstrum;
  MCEPTrack track;
  track.order = order;
  track.alpha = alpha;
  track.coeffs.resize(sp.rows(), order + 1);
  for (Eigen::Index t = 0; t < sp.rows(); ++t) {
    for (int k = 0; k < bins; ++k) {
      const double v = sp(t, k);
      if (!(v > 0.0) || !std::isfinite(v))
        fail("NonPositiveSpectrum", "frame " + std::to_string(t) + ", bin " + std::to_string(k) +
                                        " is not a positive finite value");
      log_power[static_cast<std::size_t>(k)] = std::log(v);
    }
    // Cepstrum of the log power == twice the log-amplitude cepstrum, which is
    // the one-sided (SPTK) convention for every index except 0 and N/2.
    fft.inverse(log_power, cepstrum);
    cepstrum.resize(static_cast<std::size_t>(bins));
    cepstrum.front() /= 2.0;
    cepstrum.back() /= 2.0;
    track.coeffs.row(t) = freqt(cepstrum, order, alpha).transpose();
  }
  return track;
}

Matrix mcep_to_log_sp(const MCEPTrack& track, int fft_size) {
  const int bins = fft_size / 2 + 1;
  Matrix out(track.frames(), bins);
  Eigen::MatrixXd cosines(bins, bins);
  for (int k = 0; k < bins; ++k)
    for (int m = 0; m < bins; ++m)
      cosines(k, m) = 2.0 * std::cos(std::numbers::pi * k * m / (bins - 1));
  std::vector<double> row(static_cast<std::size_t>(track.order + 1));
  for (int t = 0; t < track.frames(); ++t) {
    for (int m = 0; m <= track.order; ++m) row[static_cast<std::size_t>(m)] = track.coeffs(t, m);
    const Vector c = freqt(row, bins - 1, -track.alpha);
    out.row(t) = (cosines * c).transpose();
  }
  return out;
}

}  // namespace deepest
