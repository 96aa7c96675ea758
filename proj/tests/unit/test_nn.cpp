#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "deepest/error.hpp"
#include "deepest/nn/layers.hpp"
#include "deepest/nn/optim.hpp"
#include "deepest/nn/recurrent.hpp"
#include "gradcheck.hpp"

using namespace deepest;
using namespace deepest::nn;
using testing::layer_gradient_error;
using testing::random_matrix;

namespace {

// Reference 1-D convolution straight from the definition.
Matrix naive_conv1d(const Matrix& x, const ParamBuffer& w, const ParamBuffer& b,
                    const Conv1dShape& s) {
  Matrix y = Matrix::Zero(x.rows(), s.out_channels * s.out_length());
  for (Eigen::Index n = 0; n < x.rows(); ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int t = 0; t < s.out_length(); ++t) {
        double acc = b[o];
        for (int c = 0; c < s.in_channels; ++c)
          for (int k = 0; k < s.kernel; ++k) {
            const int i = t * s.stride + k - s.pad_left;
            if (i >= 0 && i < s.length)
              acc += w[(o * s.in_channels + c) * s.kernel + k] * x(n, c * s.length + i);
          }
        y(n, o * s.out_length() + t) = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("linear layer gradients match finite differences") {
  Rng rng(1);
  Linear layer(7, 5);
  layer.reset(rng);
  CHECK(layer_gradient_error(layer, 3, rng) < 1e-6);
}

TEST_CASE("leaky relu gradients and slope") {
  Rng rng(2);
  LeakyReLU layer(9, 0.2);
  Matrix x(1, 2);
  x << -1.0, 2.0;
  LeakyReLU small(2, 0.2);
  const Matrix y = small.forward(x);
  CHECK(y(0, 0) == doctest::Approx(-0.2));
  CHECK(y(0, 1) == doctest::Approx(2.0));
  CHECK(layer_gradient_error(layer, 4, rng) < 1e-6);
}

TEST_CASE("conv1d matches the definition on both code paths") {
  Rng rng(3);
  for (int kernel : {7, 300}) {
    Conv1dShape s{3, 4, 320, kernel, 3, 2, 5};
    Conv1d layer(s);
    layer.reset(rng);
    const Matrix x = random_matrix(2, layer.in_features(), rng);
    auto params = layer.params();
    const Matrix expect = naive_conv1d(x, params[0]->value, params[1]->value, s);
    const Matrix got = layer.forward(x);
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(layer_gradient_error(layer, 2, rng, 8) < 1e-6);
  }
}

TEST_CASE("transposed conv gradients and width arithmetic") {
  Rng rng(4);
  ConvTranspose1d layer({3, 2, 19, 9, 3, 3, 3});
  CHECK(layer.out_features() == 2 * 57);
  layer.reset(rng);
  CHECK(layer_gradient_error(layer, 3, rng) < 1e-6);
}

TEST_CASE("transposed conv is the adjoint of the matching conv") {
  // <conv(x), y> == <x, convT(y)> for shared weights and zero bias.
  Rng rng(5);
  Conv1d conv({2, 3, 57, 7, 3, 2, 2});
  ConvTranspose1d convt({3, 2, 19, 7, 3, 2, 2});
  conv.reset(rng);
  auto cp = conv.params();
  auto tp = convt.params();
  std::fill(cp[1]->value.begin(), cp[1]->value.end(), 0.0);
  // conv weight (out=3, in=2, k) vs transposed weight (in=3, out=2, k).
  for (int o = 0; o < 3; ++o)
    for (int c = 0; c < 2; ++c)
      for (int k = 0; k < 7; ++k) tp[0]->value[(o * 2 + c) * 7 + k] = cp[0]->value[(o * 2 + c) * 7 + k];
  CHECK(convt.out_features() == 2 * 57);
  const Matrix x = random_matrix(1, conv.in_features(), rng);
  const Matrix y = random_matrix(1, conv.out_features(), rng);
  const double lhs = (conv.forward(x).array() * y.array()).sum();
  const double rhs = (x.array() * convt.forward(y).array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv3d, pooling and reshape gradients") {
  Rng rng(6);
  VolumeShape v{2, 3, 6, 4};
  Conv3d conv(v, 3);
  conv.reset(rng);
  CHECK(layer_gradient_error(conv, 2, rng) < 1e-6);

  MaxPool3d pool(conv.output_shape());
  CHECK(pool.out_features() == 3 * 3 * 3 * 2);
  CHECK(layer_gradient_error(pool, 2, rng) < 1e-6);

  VolumeToSequence seq(pool.output_shape());
  CHECK(seq.steps() == 3);
  CHECK(seq.step_features() == 3 * 3 * 2);
  CHECK(layer_gradient_error(seq, 2, rng) < 1e-6);
}

TEST_CASE("bidirectional lstm gradients") {
  Rng rng(7);
  BiLstm layer(5, 4, 3);
  layer.reset(rng);
  CHECK(layer.out_features() == 5 * 6);
  CHECK(layer_gradient_error(layer, 3, rng, 16) < 1e-6);
}

TEST_CASE("attention pooling gradients and weights") {
  Rng rng(8);
  AttentionPool layer(6, 4, 5);
  layer.reset(rng);
  CHECK(layer_gradient_error(layer, 3, rng, 16) < 1e-6);
  layer.forward(random_matrix(3, layer.in_features(), rng));
  for (Eigen::Index b = 0; b < 3; ++b) {
    CHECK(layer.weights().row(b).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(layer.weights().row(b).minCoeff() >= 0.0);
  }
}

TEST_CASE("softmax cross entropy gradient") {
  Rng rng(9);
  const Matrix z = random_matrix(3, 4, rng);
  const std::vector<int> y = {0, 3, 1};
  const auto out = softmax_cross_entropy(z, y);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    Matrix zp = z, zm = z;
    zp.data()[i] += h;
    zm.data()[i] -= h;
    const double fd = (softmax_cross_entropy(zp, y).loss - softmax_cross_entropy(zm, y).loss) / (2 * h);
    CHECK(fd == doctest::Approx(out.grad.data()[i]).epsilon(1e-6));
  }
  for (Eigen::Index b = 0; b < 3; ++b) CHECK(out.probabilities.row(b).sum() == doctest::Approx(1.0));
}

TEST_CASE("optimizers descend a quadratic") {
  Param p("p", {2});
  p.value = {3.0, -2.0};
  RmsProp rms({&p}, 0.05);
  for (int i = 0; i < 400; ++i) {
    rms.zero_grad();
    p.grad = {2 * p.value[0], 2 * p.value[1]};
    rms.step();
  }
  CHECK(std::fabs(p.value[0]) < 0.1);
  Param q("q", {1});
  q.value = {5.0};
  Adam adam({&q}, 0.1);
  for (int i = 0; i < 500; ++i) {
    adam.zero_grad();
    q.grad = {2 * q.value[0]};
    adam.step();
  }
  CHECK(std::fabs(q.value[0]) < 0.05);
}

TEST_CASE("rmsprop first step matches the update rule") {
  Param p("p", {1});
  p.value = {1.0};
  p.grad = {0.5};
  RmsProp rms({&p}, 0.01, 0.9, 1e-8);
  rms.step();
  const double v = 0.1 * 0.25;
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (std::sqrt(v) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("parameter files round trip and reject mismatches") {
  Rng rng(10);
  Sequential a;
  a.add<Linear>(3, 4);
  a.add<LeakyReLU>(4);
  a.add<Linear>(4, 2);
  a.name_params("net");
  a.reset(rng);
  const auto path = std::filesystem::temp_directory_path() / "deepest_params_test.bin";
  save_params(path, a.params());

  Sequential b;
  b.add<Linear>(3, 4);
  b.add<LeakyReLU>(4);
  b.add<Linear>(4, 2);
  b.name_params("net");
  load_params(path, b.params());
  const Matrix x = random_matrix(2, 3, rng);
  CHECK((a.forward(x) - b.forward(x)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(params_checksum(a.params()) == params_checksum(b.params()));

  Sequential c;
  c.add<Linear>(3, 5);
  c.add<LeakyReLU>(5);
  c.add<Linear>(5, 2);
  c.name_params("net");
  CHECK_THROWS_AS(load_params(path, c.params()), deepest::Error);
  std::filesystem::remove(path);
}

TEST_CASE("layers reject inputs of the wrong width") {
  Linear layer(4, 2);
  CHECK_THROWS_AS(layer.forward(Matrix::Zero(1, 5)), deepest::Error);
}
