#pragma once

#include <utility>
#include <vector>

#include "deepest/spectral.hpp"

namespace deepest {

// 10 * sqrt(2) / ln(10): dB per unit of Euclidean mel-cepstral distance.
inline constexpr double kMcdScale = 6.141851463713754;

struct Alignment {
  std::vector<std::pair<int, int>> path;  // (frame in a, frame in b)
  double cost = 0.0;                      // summed frame distances along path
};

// Euclidean distance between frames on coefficients 1..order (c0 excluded).
double cepstral_distance(const MCEPTrack& a, int i, const MCEPTrack& b, int j);

// Minimum-cost monotone path with steps (1,0), (0,1), (1,1).
Alignment dtw_align(const MCEPTrack& a, const MCEPTrack& b);

// Mean per-frame distortion in dB. With aligned == false the tracks are
// DTW-aligned first; otherwise they must have equal length.
double mcd(const MCEPTrack& a, const MCEPTrack& b, bool aligned = false);

}  // namespace deepest
