#include "deepest/nn/recurrent.hpp"

#include <cmath>

#include "deepest/error.hpp"

namespace deepest::nn {
namespace {

using ConstMat = Eigen::Map<const Matrix>;
using Mat = Eigen::Map<Matrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Lstm::Lstm(int input, int hidden, std::string name)
    : input_(input),
      hidden_(hidden),
      w_input_(name + ".w_input", {4 * hidden, input}),
      w_hidden_(name + ".w_hidden", {4 * hidden, hidden}),
      bias_(name + ".bias", {4 * hidden}) {}

void Lstm::reset(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  init_uniform(w_input_, bound, rng);
  init_uniform(w_hidden_, bound, rng);
  init_uniform(bias_, bound, rng);
  // Forget gate starts open.
  for (int j = hidden_; j < 2 * hidden_; ++j) bias_.value[j] += 1.0;
}

std::vector<Matrix> Lstm::forward(const std::vector<Matrix>& xs, bool reverse) {
  reverse_ = reverse;
  const int steps = static_cast<int>(xs.size());
  const int H = hidden_;
  const Eigen::Index batch = xs.empty() ? 0 : xs.front().rows();
  ConstMat wx(w_input_.value.data(), 4 * H, input_);
  ConstMat wh(w_hidden_.value.data(), 4 * H, H);
  ConstVec bias(bias_.value.data(), 4 * H);

  xs_.assign(static_cast<std::size_t>(steps), Matrix());
  gates_.assign(static_cast<std::size_t>(steps), Matrix());
  cells_.assign(static_cast<std::size_t>(steps), Matrix());
  hs_.assign(static_cast<std::size_t>(steps), Matrix());
  std::vector<Matrix> out(static_cast<std::size_t>(steps));

  Matrix h = Matrix::Zero(batch, H), c = Matrix::Zero(batch, H);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    xs_[s] = xs[t];
    Matrix pre = xs[t] * wx.transpose();
    pre.noalias() += h * wh.transpose();
    pre.rowwise() += bias.transpose();
    for (Eigen::Index b = 0; b < batch; ++b) {
      double* g = pre.row(b).data();
      for (int j = 0; j < H; ++j) {
        g[j] = sigmoid(g[j]);
        g[H + j] = sigmoid(g[H + j]);
        g[2 * H + j] = std::tanh(g[2 * H + j]);
        g[3 * H + j] = sigmoid(g[3 * H + j]);
        c(b, j) = g[H + j] * c(b, j) + g[j] * g[2 * H + j];
        h(b, j) = g[3 * H + j] * std::tanh(c(b, j));
      }
    }
    gates_[s] = std::move(pre);
    cells_[s] = c;
    hs_[s] = h;
    out[t] = h;
  }
  return out;
}

std::vector<Matrix> Lstm::backward(const std::vector<Matrix>& grad_hs) {
  const int steps = static_cast<int>(xs_.size());
  const int H = hidden_;
  const Eigen::Index batch = steps ? xs_.front().rows() : 0;
  ConstMat wx(w_input_.value.data(), 4 * H, input_);
  ConstMat wh(w_hidden_.value.data(), 4 * H, H);
  Mat gwx(w_input_.grad.data(), 4 * H, input_);
  Mat gwh(w_hidden_.grad.data(), 4 * H, H);
  Vec gb(bias_.grad.data(), 4 * H);

  std::vector<Matrix> gxs(static_cast<std::size_t>(steps));
  Matrix dh_next = Matrix::Zero(batch, H), dc_next = Matrix::Zero(batch, H);
  Matrix dpre(batch, 4 * H);
  const Matrix zeros = Matrix::Zero(batch, H);
  for (int s = steps - 1; s >= 0; --s) {
    const int t = reverse_ ? steps - 1 - s : s;
    const Matrix& g = gates_[s];
    const Matrix& c = cells_[s];
    const Matrix& c_prev = s > 0 ? cells_[s - 1] : zeros;
    const Matrix dh = grad_hs[t] + dh_next;
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (int j = 0; j < H; ++j) {
        const double i_g = g(b, j), f_g = g(b, H + j), c_g = g(b, 2 * H + j), o_g = g(b, 3 * H + j);
        const double tc = std::tanh(c(b, j));
        const double dc = dh(b, j) * o_g * (1.0 - tc * tc) + dc_next(b, j);
        dpre(b, j) = dc * c_g * i_g * (1.0 - i_g);
        dpre(b, H + j) = dc * c_prev(b, j) * f_g * (1.0 - f_g);
        dpre(b, 2 * H + j) = dc * i_g * (1.0 - c_g * c_g);
        dpre(b, 3 * H + j) = dh(b, j) * tc * o_g * (1.0 - o_g);
        dc_next(b, j) = dc * f_g;
      }
    }
    gwx.noalias() += dpre.transpose() * xs_[s];
    if (s > 0) gwh.noalias() += dpre.transpose() * hs_[s - 1];
    gb += dpre.colwise().sum().transpose();
    gxs[t] = dpre * wx;
    dh_next = dpre * wh;
  }
  return gxs;
}

BiLstm::BiLstm(int steps, int input, int hidden)
    : steps_(steps),
      input_(input),
      hidden_(hidden),
      forward_(input, hidden, "forward"),
      backward_(input, hidden, "backward") {}

std::vector<Param*> BiLstm::params() {
  std::vector<Param*> out = forward_.params();
  for (Param* p : backward_.params()) out.push_back(p);
  return out;
}

void BiLstm::reset(Rng& rng) {
  forward_.reset(rng);
  backward_.reset(rng);
}

Matrix BiLstm::forward(const Matrix& x) {
  if (x.cols() != in_features())
    fail("ShapeMismatch", "BiLstm expects " + std::to_string(in_features()) + " input features");
  std::vector<Matrix> xs(static_cast<std::size_t>(steps_));
  for (int t = 0; t < steps_; ++t) xs[t] = x.middleCols(static_cast<Eigen::Index>(t) * input_, input_);
  const auto hf = forward_.forward(xs, false);
  const auto hb = backward_.forward(xs, true);
  Matrix y(x.rows(), out_features());
  for (int t = 0; t < steps_; ++t) {
    y.middleCols(static_cast<Eigen::Index>(t) * 2 * hidden_, hidden_) = hf[t];
    y.middleCols(static_cast<Eigen::Index>(t) * 2 * hidden_ + hidden_, hidden_) = hb[t];
  }
  return y;
}

Matrix BiLstm::backward(const Matrix& g) {
  std::vector<Matrix> gf(static_cast<std::size_t>(steps_)), gbk(static_cast<std::size_t>(steps_));
  for (int t = 0; t < steps_; ++t) {
    gf[t] = g.middleCols(static_cast<Eigen::Index>(t) * 2 * hidden_, hidden_);
    gbk[t] = g.middleCols(static_cast<Eigen::Index>(t) * 2 * hidden_ + hidden_, hidden_);
  }
  const auto xf = forward_.backward(gf);
  const auto xb = backward_.backward(gbk);
  Matrix gx(g.rows(), in_features());
  for (int t = 0; t < steps_; ++t)
    gx.middleCols(static_cast<Eigen::Index>(t) * input_, input_) = xf[t] + xb[t];
  return gx;
}

std::string BiLstm::describe() const {
  return "BiLstm(" + std::to_string(steps_) + " steps x " + std::to_string(input_) + " -> 2x" +
         std::to_string(hidden_) + ")";
}

AttentionPool::AttentionPool(int steps, int features, int attention)
    : steps_(steps),
      features_(features),
      attention_(attention),
      weight_("weight", {attention, features}),
      bias_("bias", {attention}),
      score_("score", {attention}) {}

void AttentionPool::reset(Rng& rng) {
  init_uniform(weight_, 1.0 / std::sqrt(static_cast<double>(features_)), rng);
  init_uniform(bias_, 1.0 / std::sqrt(static_cast<double>(features_)), rng);
  init_uniform(score_, 1.0 / std::sqrt(static_cast<double>(attention_)), rng);
}

Matrix AttentionPool::forward(const Matrix& x) {
  if (x.cols() != in_features())
    fail("ShapeMismatch",
         "AttentionPool expects " + std::to_string(in_features()) + " input features");
  input_ = x;
  ConstMat w(weight_.value.data(), attention_, features_);
  ConstVec bias(bias_.value.data(), attention_);
  ConstVec v(score_.value.data(), attention_);
  alpha_.resize(x.rows(), steps_);
  hidden_.assign(static_cast<std::size_t>(x.rows()), Matrix());
  Matrix y(x.rows(), features_);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    ConstMat h(x.row(b).data(), steps_, features_);
    Matrix u = h * w.transpose();
    u.rowwise() += bias.transpose();
    u = u.array().tanh().matrix();
    Eigen::VectorXd e = u * v;
    e.array() -= e.maxCoeff();
    e = e.array().exp().matrix();
    e /= e.sum();
    alpha_.row(b) = e.transpose();
    y.row(b) = e.transpose() * h;
    hidden_[b] = std::move(u);
  }
  return y;
}

Matrix AttentionPool::backward(const Matrix& g) {
  ConstMat w(weight_.value.data(), attention_, features_);
  ConstVec v(score_.value.data(), attention_);
  Mat gw(weight_.grad.data(), attention_, features_);
  Vec gbias(bias_.grad.data(), attention_);
  Vec gv(score_.grad.data(), attention_);
  Matrix gx(g.rows(), in_features());
  for (Eigen::Index b = 0; b < g.rows(); ++b) {
    ConstMat h(input_.row(b).data(), steps_, features_);
    const Matrix& u = hidden_[b];
    const Eigen::VectorXd alpha = alpha_.row(b).transpose();
    const Eigen::VectorXd gy = g.row(b).transpose();
    Mat gh(gx.row(b).data(), steps_, features_);
    gh.noalias() = alpha * gy.transpose();
    const Eigen::VectorXd galpha = h * gy;
    const double mean = alpha.dot(galpha);
    const Eigen::VectorXd ge = alpha.cwiseProduct((galpha.array() - mean).matrix());
    gv.noalias() += u.transpose() * ge;
    const Matrix gz = ((ge * v.transpose()).array() * (1.0 - u.array().square())).matrix();
    gw.noalias() += gz.transpose() * h;
    gbias += gz.colwise().sum().transpose();
    gh.noalias() += gz * w;
  }
  return gx;
}

std::string AttentionPool::describe() const {
  return "AttentionPool(" + std::to_string(steps_) + " x " + std::to_string(features_) +
         ", attention " + std::to_string(attention_) + ")";
}

}  // namespace deepest::nn
