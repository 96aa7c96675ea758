#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "deepest/nn/layers.hpp"

namespace testing {

using deepest::Matrix;

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline double rel_error(double a, double b) {
  return std::fabs(a - b) / std::max({1e-6, std::fabs(a), std::fabs(b)});
}

// Checks a layer's backward() against central differences of
// L = sum(r .* layer(x)) for sampled inputs and parameters.
template <typename LayerT>
double layer_gradient_error(LayerT& layer, int batch, std::mt19937_64& rng, int samples = 12,
                            double h = 1e-5) {
  const Matrix x = random_matrix(batch, layer.in_features(), rng);
  const Matrix r = random_matrix(batch, layer.out_features(), rng);
  auto loss = [&](const Matrix& input) { return (layer.forward(input).array() * r.array()).sum(); };

  for (auto* p : layer.params()) p->zero_grad();
  layer.forward(x);
  const Matrix gx = layer.backward(r);

  double worst = 0.0;
  std::uniform_int_distribution<Eigen::Index> pick_x(0, x.size() - 1);
  for (int s = 0; s < samples; ++s) {
    const Eigen::Index i = pick_x(rng);
    Matrix xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double fd = (loss(xp) - loss(xm)) / (2 * h);
    worst = std::max(worst, rel_error(fd, gx.data()[i]));
  }
  for (auto* p : layer.params()) {
    std::uniform_int_distribution<std::size_t> pick(0, p->size() - 1);
    for (int s = 0; s < samples; ++s) {
      const std::size_t j = pick(rng);
      const double keep = p->value[j];
      p->value[j] = keep + h;
      const double up = loss(x);
      p->value[j] = keep - h;
      const double down = loss(x);
      p->value[j] = keep;
      worst = std::max(worst, rel_error((up - down) / (2 * h), p->grad[j]));
    }
  }
  return worst;
}

}  // namespace testing
