#include "deepest/nn/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "deepest/error.hpp"

namespace deepest::nn {
namespace {

constexpr char kMagic[8] = {'D', 'P', 'P', 'A', 'R', 'M', '0', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    fail("CorruptCheckpoint", "truncated parameter file " + path.string());
  return v;
}

}  // namespace

void Optimizer::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

RmsProp::RmsProp(std::vector<Param*> params, double lr, double decay, double eps)
    : Optimizer(std::move(params)), lr_(lr), decay_(decay), eps_(eps) {
  for (Param* p : params_) square_.emplace_back(p->size(), 0.0);
}

void RmsProp::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    auto& v = square_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      v[j] = decay_ * v[j] + (1.0 - decay_) * g * g;
      p.value[j] -= lr_ * g / (std::sqrt(v[j]) + eps_);
    }
  }
}

Adam::Adam(std::vector<Param*> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Param* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = *params_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad[j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      p.value[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
    }
  }
}

Matrix softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const double top = logits.row(b).maxCoeff();
    p.row(b) = (logits.row(b).array() - top).exp().matrix();
    p.row(b) /= p.row(b).sum();
  }
  return p;
}

SoftmaxLoss softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    fail("ShapeMismatch", "label count does not match the batch");
  SoftmaxLoss out;
  out.probabilities = softmax(logits);
  out.grad = out.probabilities;
  const double scale = 1.0 / static_cast<double>(labels.size());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= logits.cols()) fail("ShapeMismatch", "label out of range");
    out.loss -= std::log(std::max(out.probabilities(b, y), 1e-300)) * scale;
    out.grad(b, y) -= 1.0;
  }
  out.grad *= scale;
  return out;
}

void save_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("IoError", "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) fail("IoError", "failed writing " + path.string());
}

void load_params(const std::filesystem::path& path, const std::vector<Param*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("MissingCheckpoint", "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail("CorruptCheckpoint", path.string() + " is not a parameter file");
  const auto count = get<std::uint32_t>(in, path);
  if (count != params.size())
    fail("CorruptCheckpoint", path.string() + " holds " + std::to_string(count) +
                                  " tensors, model has " + std::to_string(params.size()));
  for (Param* p : params) {
    const auto name_len = get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail("CorruptCheckpoint", "truncated " + path.string());
    const auto rank = get<std::uint32_t>(in, path);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(get<std::uint32_t>(in, path));
    if (name != p->name || shape != p->shape)
      fail("CorruptCheckpoint", "tensor " + name + " does not match model tensor " + p->name);
    if (!in.read(reinterpret_cast<char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double))))
      fail("CorruptCheckpoint", "truncated " + path.string());
  }
}

std::uint64_t params_checksum(const std::vector<Param*>& params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    for (std::size_t i = 0; i < p->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace deepest::nn
