#pragma once

#include <array>
#include <span>

#include "deepest/types.hpp"

namespace deepest {

// Unit-sum, log-scaled spectral frames: the representation the
// encoder/decoder pair operates on.
struct NormalizedSpectrum {
  Matrix log_sp;  // T x D, logsumexp of every row is 0
  Vector energy;  // T, the original row sums
};

NormalizedSpectrum sp_normalize(const Matrix& sp);
Matrix sp_denormalize(const NormalizedSpectrum& norm);

struct MelOptions {
  int sample_rate = 16000;
  int bands = 40;
  int window = 400;  // 25 ms
  int hop = 160;     // 10 ms
  int fft_size = 512;
  int segment_frames = 300;
  int delta_window = 2;
};

// Channels: log-mel, delta, delta-delta; each segment_frames x bands.
struct MelVolume {
  std::array<Matrix, 3> channels;

  int frames() const { return static_cast<int>(channels[0].rows()); }
  int bands() const { return static_cast<int>(channels[0].cols()); }
};

// Log-mel spectrogram without the fixed-length rule.
Matrix log_mel_spectrogram(std::span<const double> waveform, const MelOptions& options = {});

// Regression deltas over +-window frames, edges replicated.
Matrix deltas(const Matrix& features, int window = 2);

// Shorter utterances repeat their last frame; longer ones are cropped around
// the centre. Deltas are taken after the length rule.
MelVolume mel_with_deltas(std::span<const double> waveform, const MelOptions& options = {});

struct MCEPTrack {
  Matrix coeffs;  // T x (order + 1); column 0 is the energy term
  int order = 24;
  double alpha = 0.42;

  int frames() const { return static_cast<int>(coeffs.rows()); }
};

// All-pass frequency warping of a cepstrum (SPTK freqt recursion).
Vector freqt(std::span<const double> cepstrum, int out_order, double alpha);

// Mel-cepstrum of a power spectral envelope (T x 513).
MCEPTrack mcep(const Matrix& sp, int order = 24, double alpha = 0.42);

// Inverse warping back to a natural-log power spectrum on fft_size/2+1 bins.
Matrix mcep_to_log_sp(const MCEPTrack& track, int fft_size = 1024);

}  // namespace deepest
