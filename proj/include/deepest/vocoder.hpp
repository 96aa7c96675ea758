#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepest/types.hpp"

namespace deepest {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFftSize = 1024;
inline constexpr int kSpectrumBins = kFftSize / 2 + 1;  // 513
inline constexpr double kFramePeriodMs = 5.0;
inline constexpr int kHopSamples = 80;  // 5 ms at 16 kHz

// Frame-synchronous vocoder parameters. Frame t sits at t * 5 ms.
struct FeatureSet {
  Vector f0;  // Hz, 0 marks an unvoiced frame
  Matrix sp;  // T x 513 power spectral envelope, strictly positive
  Matrix ap;  // T x 513 aperiodic share of the power, in [0, 1]
  double frame_period_ms = kFramePeriodMs;
  int fft_size = kFftSize;
  int sample_rate = kSampleRate;

  int frames() const { return static_cast<int>(f0.size()); }
};

struct F0Options {
  double floor_hz = 60.0;
  double ceil_hz = 600.0;
  int window = 400;  // 25 ms integration window
  double threshold = 0.15;
  double voicing_threshold = 0.35;  // fallback when no dip is under `threshold`
  double silence_db = -50.0;  // relative to the loudest frame
};

struct SynthesisOptions {
  std::uint64_t noise_seed = 0x5eed;
  // Scale the output down when its peak exceeds this value.
  double peak_limit = 0.99;
};

inline int frame_count(std::size_t samples) {
  return static_cast<int>(samples / kHopSamples) + 1;
}

// Throws InvalidFeatures when shapes, positivity or ranges are violated.
void validate(const FeatureSet& features);

// Cumulative-mean-normalised difference pitch tracker on the 5 ms grid.
Vector estimate_f0(std::span<const double> waveform, int sample_rate,
                   const F0Options& options = {});

// Pitch-adaptive spectral envelope (CheapTrick) for every frame of `f0`.
Matrix estimate_spectral_envelope(std::span<const double> waveform, const Vector& f0);

// Ratio of inter-harmonic valleys to harmonic peaks, interpolated across
// frequency. Unvoiced frames are fully aperiodic.
Matrix estimate_aperiodicity(std::span<const double> waveform, const Vector& f0);

FeatureSet analyze(std::span<const double> waveform, int sample_rate,
                   const F0Options& options = {});

// Pulse-plus-noise resynthesis; output holds frames() * 80 samples.
std::vector<double> synthesize(const FeatureSet& features, const SynthesisOptions& options = {});

}  // namespace deepest
