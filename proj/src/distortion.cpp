#include "deepest/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "deepest/error.hpp"

namespace deepest {
namespace {

void check_pair(const MCEPTrack& a, const MCEPTrack& b) {
  if (a.frames() == 0 || b.frames() == 0) fail("EmptyTrack", "mel-cepstral track has no frames");
  if (a.coeffs.cols() != b.coeffs.cols() || a.order != b.order)
    fail("OrderMismatch", "mel-cepstral orders differ: " + std::to_string(a.order) + " vs " +
                              std::to_string(b.order));
}

}  // namespace

double cepstral_distance(const MCEPTrack& a, int i, const MCEPTrack& b, int j) {
  double sum = 0.0;
  for (int m = 1; m <= a.order; ++m) {
    const double d = a.coeffs(i, m) - b.coeffs(j, m);
    sum += d * d;
  }
  return std::sqrt(sum);
}

Alignment dtw_align(const MCEPTrack& a, const MCEPTrack& b) {
  check_pair(a, b);
  const int n = a.frames(), m = b.frames();
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Constant(n, m, inf);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double d = cepstral_distance(a, i, b, j);
      if (i == 0 && j == 0) {
        acc(i, j) = d;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = acc(i - 1, j - 1);
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = d + best;
    }
  }

  Alignment out;
  out.cost = acc(n - 1, m - 1);
  int i = n - 1, j = m - 1;
  out.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    // Ties prefer the diagonal, then advancing in a.
    if (i > 0 && j > 0 && acc(i - 1, j - 1) <= acc(i - 1, j) && acc(i - 1, j - 1) <= acc(i, j - 1)) {
      --i;
      --j;
    } else if (i > 0 && (j == 0 || acc(i - 1, j) <= acc(i, j - 1))) {
      --i;
    } else {
      --j;
    }
    out.path.emplace_back(i, j);
  }
  std::reverse(out.path.begin(), out.path.end());
  return out;
}

double mcd(const MCEPTrack& a, const MCEPTrack& b, bool aligned) {
  check_pair(a, b);
  double total = 0.0;
  std::size_t pairs = 0;
  if (aligned) {
    if (a.frames() != b.frames())
      fail("LengthMismatch", "aligned MCD needs equal frame counts: " +
                                 std::to_string(a.frames()) + " vs " + std::to_string(b.frames()));
    for (int t = 0; t < a.frames(); ++t) total += cepstral_distance(a, t, b, t);
    pairs = static_cast<std::size_t>(a.frames());
  } else {
    const Alignment al = dtw_align(a, b);
    for (const auto& [i, j] : al.path) total += cepstral_distance(a, i, b, j);
    pairs = al.path.size();
  }
  return kMcdScale * total / static_cast<double>(pairs);
}

}  // namespace deepest
