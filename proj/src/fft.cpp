#include "deepest/fft.hpp"

#include <algorithm>

#include "deepest/error.hpp"

namespace deepest {

RealFft::RealFft(int n) : n_(n), real_(static_cast<std::size_t>(n)) {
  if (n < 2 || n % 2 != 0) fail("InvalidArgument", "FFT length must be even and >= 2");
  fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum);
}

void RealFft::forward(std::span<const double> in, std::vector<std::complex<double>>& out) {
  const std::size_t m = std::min(in.size(), real_.size());
  std::copy_n(in.begin(), m, real_.begin());
  std::fill(real_.begin() + static_cast<std::ptrdiff_t>(m), real_.end(), 0.0);
  fft_.fwd(out, real_);
  out.resize(static_cast<std::size_t>(bins()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::vector<double>& out) {
  spectrum_.assign(in.begin(), in.begin() + bins());
  fft_.inv(out, spectrum_, n_);
}

}  // namespace deepest
