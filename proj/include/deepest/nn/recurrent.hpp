#pragma once

#include <vector>

#include "deepest/nn/layers.hpp"

namespace deepest::nn {

// Single-direction LSTM over a batch of equal-length sequences. Gate order
// in the stacked weights is (input, forget, cell, output).
class Lstm {
 public:
  Lstm(int input, int hidden, std::string name);

  // xs[t] is B x input; returns hs[t], B x hidden.
  std::vector<Matrix> forward(const std::vector<Matrix>& xs, bool reverse);
  // Takes d loss / d hs[t]; returns d loss / d xs[t].
  std::vector<Matrix> backward(const std::vector<Matrix>& grad_hs);
  std::vector<Param*> params() { return {&w_input_, &w_hidden_, &bias_}; }
  void reset(Rng& rng);
  int hidden() const { return hidden_; }

 private:
  int input_, hidden_;
  bool reverse_ = false;
  Param w_input_;   // 4H x input
  Param w_hidden_;  // 4H x H
  Param bias_;      // 4H
  std::vector<Matrix> xs_, gates_, cells_, hs_;  // indexed by processing step
};

// Bidirectional LSTM on time-major rows (B x T*input) -> (B x T*2H); each
// step's output is [forward h, backward h].
class BiLstm : public Layer {
 public:
  BiLstm(int steps, int input, int hidden);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override;
  int in_features() const override { return steps_ * input_; }
  int out_features() const override { return steps_ * 2 * hidden_; }
  std::string describe() const override;
  void reset(Rng& rng) override;

 private:
  int steps_, input_, hidden_;
  Lstm forward_, backward_;
};

// Additive (Bahdanau-style) attention pooling: e_t = v . tanh(W h_t + b),
// alpha = softmax(e), output = sum_t alpha_t h_t.
class AttentionPool : public Layer {
 public:
  AttentionPool(int steps, int features, int attention);
  Matrix forward(const Matrix& x) override;
  Matrix backward(const Matrix& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_, &score_}; }
  int in_features() const override { return steps_ * features_; }
  int out_features() const override { return features_; }
  std::string describe() const override;
  void reset(Rng& rng) override;
  // B x T weights from the last forward call.
  const Matrix& weights() const { return alpha_; }

 private:
  int steps_, features_, attention_;
  Param weight_;  // A x D
  Param bias_;    // A
  Param score_;   // A
  Matrix input_, alpha_;
  std::vector<Matrix> hidden_;  // per sample, T x A tanh activations
};

}  // namespace deepest::nn
