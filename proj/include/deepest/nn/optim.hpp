#pragma once

#include <filesystem>
#include <vector>

#include "deepest/nn/layers.hpp"

namespace deepest::nn {

class Optimizer {
 public:
  explicit Optimizer(std::vector<Param*> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  void zero_grad();
  const std::vector<Param*>& params() const { return params_; }

 protected:
  std::vector<Param*> params_;
};

// v <- decay * v + (1 - decay) * g^2;  p <- p - lr * g / (sqrt(v) + eps)
class RmsProp : public Optimizer {
 public:
  RmsProp(std::vector<Param*> params, double lr, double decay = 0.9, double eps = 1e-8);
  void step() override;
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_, decay_, eps_;
  std::vector<std::vector<double>> square_;
};

class Adam : public Optimizer {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step() override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct SoftmaxLoss {
  double loss = 0.0;        // mean negative log-likelihood
  Matrix probabilities;     // B x K
  Matrix grad;              // d loss / d logits
};

SoftmaxLoss softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);
Matrix softmax(const Matrix& logits);

// Binary parameter blob: magic, count, then (name, shape, values) records.
void save_params(const std::filesystem::path& path, const std::vector<Param*>& params);
// Names and shapes must match exactly; throws CorruptCheckpoint otherwise.
void load_params(const std::filesystem::path& path, const std::vector<Param*>& params);

// FNV-1a over parameter values, for provenance records.
std::uint64_t params_checksum(const std::vector<Param*>& params);

}  // namespace deepest::nn
