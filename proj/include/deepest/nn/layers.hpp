#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "deepest/types.hpp"

// Minimal feed-forward building blocks. Every layer maps a batch matrix
// (B x in_features) to (B x out_features); convolutional layers read each row
// as a channel-major (C, ...) volume. forward() caches what backward() needs,
// so forward/backward calls must pair up.
namespace deepest::nn {

using Rng = std::mt19937_64;

// 32-byte aligned storage keeps vectorised reductions over parameter
// buffers in a fixed summation order, independent of heap layout.
using ParamBuffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Param {
  std::string name;
  std::vector<int> shape;
  ParamBuffer value;
  ParamBuffer grad;

  Param() = default;
  Param(std::string name, std::vector<int> shape);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

// Uniform(-bound, bound) initialisation.
void init_uniform(Param& p, double bound, Rng& rng);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x) = 0;
  // Returns d loss / d input and accumulates parameter gradients.
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual int in_features() const = 0;
  virtual int out_features() const = 0;
  virtual std::string describe() const = 0;
  virtual void reset(Rng&) {}
};

class Linear : public Layer {
 public:
  Linear(int in, int out);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  int in_features() const override { return in_; }
  int out_features() const override { return out_; }
  std::string describe() const override;
  void reset(Rng& rng) override;

 private:
  int in_, out_;
  Param weight_;  // out x in
  Param bias_;
  Matrix input_;
};

class LeakyReLU : public Layer {
 public:
  LeakyReLU(int features, double slope = 0.2) : features_(features), slope_(slope) {}
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  int in_features() const override { return features_; }
  int out_features() const override { return features_; }
  std::string describe() const override;

 private:
  int features_;
  double slope_;
  Matrix input_;
};

struct Conv1dShape {
  int in_channels = 1;
  int out_channels = 1;
  int length = 1;  // input width
  int kernel = 1;
  int stride = 1;
  int pad_left = 0;
  int pad_right = 0;

  int padded() const { return length + pad_left + pad_right; }
  int out_length() const { return (padded() - kernel) / stride + 1; }
};

class Conv1d : public Layer {
 public:
  explicit Conv1d(const Conv1dShape& shape);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  int in_features() const override { return s_.in_channels * s_.length; }
  int out_features() const override { return s_.out_channels * s_.out_length(); }
  std::string describe() const override;
  void reset(Rng& rng) override;
  const Conv1dShape& shape() const { return s_; }

 private:
  bool direct() const { return s_.kernel >= 256; }
  Matrix padded_input(const Matrix& x) const;

  Conv1dShape s_;
  Param weight_;  // out x in x kernel
  Param bias_;
  Matrix padded_;  // B x (in_channels * padded width)
};

struct ConvTranspose1dShape {
  int in_channels = 1;
  int out_channels = 1;
  int length = 1;
  int kernel = 1;
  int stride = 1;
  int crop_left = 0;
  int crop_right = 0;

  int full_length() const { return (length - 1) * stride + kernel; }
  int out_length() const { return full_length() - crop_left - crop_right; }
};

class ConvTranspose1d : public Layer {
 public:
  explicit ConvTranspose1d(const ConvTranspose1dShape& shape);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  int in_features() const override { return s_.in_channels * s_.length; }
  int out_features() const override { return s_.out_channels * s_.out_length(); }
  std::string describe() const override;
  void reset(Rng& rng) override;

 private:
  ConvTranspose1dShape s_;
  Param weight_;  // in x out x kernel
  Param bias_;
  Matrix input_;
};

// Volume layout (C, D, T, F); 3x3x3 kernels, stride 1, zero padding 1.
struct VolumeShape {
  int channels = 1;
  int depth = 1;
  int time = 1;
  int freq = 1;

  int size() const { return channels * depth * time * freq; }
  int plane() const { return depth * time * freq; }
};

class Conv3d : public Layer {
 public:
  Conv3d(const VolumeShape& input, int out_channels);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  int in_features() const override { return in_.size(); }
  int out_features() const override { return out_channels_ * in_.plane(); }
  std::string describe() const override;
  void reset(Rng& rng) override;
  VolumeShape output_shape() const { return {out_channels_, in_.depth, in_.time, in_.freq}; }

 private:
  void im2col(const double* x, Matrix& cols) const;
  void col2im(const Matrix& cols, double* x) const;

  VolumeShape in_;
  int out_channels_;
  Param weight_;  // out x (in * 27)
  Param bias_;
  Matrix input_;
};

// Max pooling over non-overlapping (1, 2, 2) windows of (D, T, F).
class MaxPool3d : public Layer {
 public:
  explicit MaxPool3d(const VolumeShape& input);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  int in_features() const override { return in_.size(); }
  int out_features() const override { return output_shape().size(); }
  std::string describe() const override;
  VolumeShape output_shape() const { return {in_.channels, in_.depth, in_.time / 2, in_.freq / 2}; }

 private:
  VolumeShape in_;
  std::vector<int> argmax_;  // B x out_features, flat input index
};

// (C, D, T, F) -> time-major sequence (T, C * D * F).
class VolumeToSequence : public Layer {
 public:
  explicit VolumeToSequence(const VolumeShape& input) : in_(input) {}
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  int in_features() const override { return in_.size(); }
  int out_features() const override { return in_.size(); }
  std::string describe() const override;
  int steps() const { return in_.time; }
  int step_features() const { return in_.channels * in_.depth * in_.freq; }

 private:
  int source_index(int t, int j) const;
  VolumeShape in_;
};

class Sequential {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
  std::vector<Param*> params();
  void reset(Rng& rng);
  void zero_grad();
  int in_features() const;
  int out_features() const;
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  std::vector<std::string> describe() const;
  // Prefixes parameter names with `prefix` + layer index; call once.
  void name_params(const std::string& prefix);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

std::size_t parameter_count(const std::vector<Param*>& params);

}  // namespace deepest::nn
