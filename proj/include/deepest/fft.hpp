#pragma once

#include <complex>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace deepest {

// Real-input FFT of fixed even length n. Spectra hold n/2 + 1 bins; the
// inverse is normalised by 1/n so inverse(forward(x)) == x.
class RealFft {
 public:
  explicit RealFft(int n);

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  // `in` may be shorter than n; it is zero-padded.
  void forward(std::span<const double> in, std::vector<std::complex<double>>& out);
  void inverse(std::span<const std::complex<double>> in, std::vector<double>& out);

 private:
  int n_;
  Eigen::FFT<double> fft_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spectrum_;
};

}  // namespace deepest
