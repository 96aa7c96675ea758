#include "deepest/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "deepest/error.hpp"

namespace deepest::nn {
namespace {

using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;
using ConstMat = Eigen::Map<const Matrix>;
using Mat = Eigen::Map<Matrix>;

// Upper bound on im2col buffer entries before the batch is processed in chunks.
constexpr long kColumnBudget = 1L << 22;

void check_input(const Matrix& x, int expected, const std::string& layer) {
  if (x.cols() != expected)
    fail("ShapeMismatch", layer + " expects " + std::to_string(expected) +
                              " input features, got " + std::to_string(x.cols()));
}

int chunk_rows(long per_sample) {
  return static_cast<int>(std::max<long>(1, kColumnBudget / std::max<long>(1, per_sample)));
}

}  // namespace

Param::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_uniform(Param& p, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : p.value) v = dist(rng);
}

std::size_t parameter_count(const std::vector<Param*>& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in, int out)
    : in_(in), out_(out), weight_("weight", {out, in}), bias_("bias", {out}) {}

void Linear::reset(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Matrix Linear::forward(const Matrix& x) {
  check_input(x, in_, "Linear");
  input_ = x;
  ConstMat w(weight_.value.data(), out_, in_);
  Matrix y = x * w.transpose();
  y.rowwise() += ConstVec(bias_.value.data(), out_).transpose();
  return y;
}

Matrix Linear::backward(const Matrix& g) {
  Mat gw(weight_.grad.data(), out_, in_);
  gw.noalias() += g.transpose() * input_;
  Vec(bias_.grad.data(), out_) += g.colwise().sum().transpose();
  ConstMat w(weight_.value.data(), out_, in_);
  return g * w;
}

std::string Linear::describe() const {
  return "Linear(" + std::to_string(in_) + " -> " + std::to_string(out_) + ")";
}

// ------------------------------------------------------------- LeakyReLU

Matrix LeakyReLU::forward(const Matrix& x) {
  check_input(x, features_, "LeakyReLU");
  input_ = x;
  return x.unaryExpr([s = slope_](double v) { return v > 0.0 ? v : s * v; });
}

Matrix LeakyReLU::backward(const Matrix& g) {
  Matrix out(g.rows(), g.cols());
  const double s = slope_;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    out.data()[i] = input_.data()[i] > 0.0 ? g.data()[i] : s * g.data()[i];
  return out;
}

std::string LeakyReLU::describe() const {
  std::ostringstream os;
  os << "LeakyReLU(" << slope_ << ")";
  return os.str();
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(const Conv1dShape& shape)
    : s_(shape),
      weight_("weight", {shape.out_channels, shape.in_channels, shape.kernel}),
      bias_("bias", {shape.out_channels}) {
  if (s_.padded() < s_.kernel) fail("ShapeMismatch", "Conv1d kernel wider than padded input");
}

void Conv1d::reset(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(s_.in_channels * s_.kernel));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Matrix Conv1d::padded_input(const Matrix& x) const {
  const int lp = s_.padded();
  Matrix p = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(s_.in_channels) * lp);
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (int c = 0; c < s_.in_channels; ++c)
      p.row(b).segment(static_cast<Eigen::Index>(c) * lp + s_.pad_left, s_.length) =
          x.row(b).segment(static_cast<Eigen::Index>(c) * s_.length, s_.length);
  return p;
}

Matrix Conv1d::forward(const Matrix& x) {
  check_input(x, in_features(), "Conv1d");
  padded_ = padded_input(x);
  const int batch = static_cast<int>(x.rows());
  const int cin = s_.in_channels, cout = s_.out_channels, k = s_.kernel, st = s_.stride;
  const int lp = s_.padded(), lout = s_.out_length();
  Matrix y(batch, static_cast<Eigen::Index>(cout) * lout);

  if (direct()) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = padded_.row(b).data();
      double* yb = y.row(b).data();
      for (int o = 0; o < cout; ++o) {
        double* yo = yb + static_cast<std::ptrdiff_t>(o) * lout;
        std::fill(yo, yo + lout, bias_.value[o]);
        for (int c = 0; c < cin; ++c) {
          ConstVec w(weight_.value.data() + (static_cast<std::size_t>(o) * cin + c) * k, k);
          const double* xc = xb + static_cast<std::ptrdiff_t>(c) * lp;
          for (int t = 0; t < lout; ++t) yo[t] += w.dot(ConstVec(xc + t * st, k));
        }
      }
    }
    return y;
  }

  ConstMat w(weight_.value.data(), cout, static_cast<Eigen::Index>(cin) * k);
  const int chunk = chunk_rows(static_cast<long>(cin) * k * lout);
  Matrix cols;
  for (int b0 = 0; b0 < batch; b0 += chunk) {
    const int n = std::min(chunk, batch - b0);
    cols.resize(static_cast<Eigen::Index>(cin) * k, static_cast<Eigen::Index>(n) * lout);
    for (int c = 0; c < cin; ++c)
      for (int kk = 0; kk < k; ++kk) {
        double* row = cols.row(static_cast<Eigen::Index>(c) * k + kk).data();
        for (int b = 0; b < n; ++b) {
          const double* xc = padded_.row(b0 + b).data() + static_cast<std::ptrdiff_t>(c) * lp + kk;
          for (int t = 0; t < lout; ++t) row[b * lout + t] = xc[t * st];
        }
      }
    const Matrix out = w * cols;
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < cout; ++o) {
        double* dst = y.row(b0 + b).data() + static_cast<std::ptrdiff_t>(o) * lout;
        const double* src = out.row(o).data() + static_cast<std::ptrdiff_t>(b) * lout;
        for (int t = 0; t < lout; ++t) dst[t] = src[t] + bias_.value[o];
      }
  }
  return y;
}

Matrix Conv1d::backward(const Matrix& g) {
  const int batch = static_cast<int>(g.rows());
  const int cin = s_.in_channels, cout = s_.out_channels, k = s_.kernel, st = s_.stride;
  const int lp = s_.padded(), lout = s_.out_length();
  Matrix gpad = Matrix::Zero(batch, static_cast<Eigen::Index>(cin) * lp);

  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < cout; ++o)
      bias_.grad[o] += g.row(b).segment(static_cast<Eigen::Index>(o) * lout, lout).sum();

  if (direct()) {
    for (int b = 0; b < batch; ++b) {
      const double* xb = padded_.row(b).data();
      double* gb = gpad.row(b).data();
      for (int o = 0; o < cout; ++o) {
        const double* go = g.row(b).data() + static_cast<std::ptrdiff_t>(o) * lout;
        for (int c = 0; c < cin; ++c) {
          const std::size_t offset = (static_cast<std::size_t>(o) * cin + c) * k;
          ConstVec w(weight_.value.data() + offset, k);
          Vec gw(weight_.grad.data() + offset, k);
          const double* xc = xb + static_cast<std::ptrdiff_t>(c) * lp;
          double* gc = gb + static_cast<std::ptrdiff_t>(c) * lp;
          for (int t = 0; t < lout; ++t) {
            const double v = go[t];
            if (v == 0.0) continue;
            gw += v * ConstVec(xc + t * st, k);
            Vec(gc + t * st, k) += v * w;
          }
        }
      }
    }
  } else {
    ConstMat w(weight_.value.data(), cout, static_cast<Eigen::Index>(cin) * k);
    Mat gw(weight_.grad.data(), cout, static_cast<Eigen::Index>(cin) * k);
    const int chunk = chunk_rows(static_cast<long>(cin) * k * lout);
    Matrix cols, gy, gcols;
    for (int b0 = 0; b0 < batch; b0 += chunk) {
      const int n = std::min(chunk, batch - b0);
      cols.resize(static_cast<Eigen::Index>(cin) * k, static_cast<Eigen::Index>(n) * lout);
      for (int c = 0; c < cin; ++c)
        for (int kk = 0; kk < k; ++kk) {
          double* row = cols.row(static_cast<Eigen::Index>(c) * k + kk).data();
          for (int b = 0; b < n; ++b) {
            const double* xc =
                padded_.row(b0 + b).data() + static_cast<std::ptrdiff_t>(c) * lp + kk;
            for (int t = 0; t < lout; ++t) row[b * lout + t] = xc[t * st];
          }
        }
      gy.resize(cout, static_cast<Eigen::Index>(n) * lout);
      for (int b = 0; b < n; ++b)
        for (int o = 0; o < cout; ++o)
          gy.row(o).segment(static_cast<Eigen::Index>(b) * lout, lout) =
              g.row(b0 + b).segment(static_cast<Eigen::Index>(o) * lout, lout);
      gw.noalias() += gy * cols.transpose();
      gcols.noalias() = w.transpose() * gy;
      for (int c = 0; c < cin; ++c)
        for (int kk = 0; kk < k; ++kk) {
          const double* row = gcols.row(static_cast<Eigen::Index>(c) * k + kk).data();
          for (int b = 0; b < n; ++b) {
            double* gc = gpad.row(b0 + b).data() + static_cast<std::ptrdiff_t>(c) * lp + kk;
            for (int t = 0; t < lout; ++t) gc[t * st] += row[b * lout + t];
          }
        }
    }
  }

  Matrix gx(batch, in_features());
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < cin; ++c)
      gx.row(b).segment(static_cast<Eigen::Index>(c) * s_.length, s_.length) =
          gpad.row(b).segment(static_cast<Eigen::Index>(c) * lp + s_.pad_left, s_.length);
  return gx;
}

std::string Conv1d::describe() const {
  std::ostringstream os;
  os << "Conv1d(" << s_.in_channels << "x" << s_.length << " -> " << s_.out_channels << "x"
     << s_.out_length() << ", kernel " << s_.kernel << ", stride " << s_.stride << ", pad "
     << s_.pad_left << "/" << s_.pad_right << ")";
  return os.str();
}

// ------------------------------------------------------- ConvTranspose1d

ConvTranspose1d::ConvTranspose1d(const ConvTranspose1dShape& shape)
    : s_(shape),
      weight_("weight", {shape.in_channels, shape.out_channels, shape.kernel}),
      bias_("bias", {shape.out_channels}) {
  if (s_.out_length() <= 0) fail("ShapeMismatch", "ConvTranspose1d crops away the whole output");
}

void ConvTranspose1d::reset(Rng& rng) {
  // Each output sample sees about in_channels * kernel / stride inputs.
  const double fan_in = static_cast<double>(s_.in_channels) * s_.kernel / s_.stride;
  const double bound = 1.0 / std::sqrt(fan_in);
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

Matrix ConvTranspose1d::forward(const Matrix& x) {
  check_input(x, in_features(), "ConvTranspose1d");
  input_ = x;
  const int batch = static_cast<int>(x.rows());
  const int cin = s_.in_channels, cout = s_.out_channels, k = s_.kernel, st = s_.stride;
  const int lin = s_.length, lfull = s_.full_length(), lout = s_.out_length();
  ConstMat w(weight_.value.data(), cin, static_cast<Eigen::Index>(cout) * k);
  Matrix y(batch, static_cast<Eigen::Index>(cout) * lout);
  std::vector<double> full(static_cast<std::size_t>(cout) * lfull);

  const int chunk = chunk_rows(static_cast<long>(cout) * k * lin);
  Matrix xm, cols;
  for (int b0 = 0; b0 < batch; b0 += chunk) {
    const int n = std::min(chunk, batch - b0);
    xm.resize(cin, static_cast<Eigen::Index>(n) * lin);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < cin; ++c)
        xm.row(c).segment(static_cast<Eigen::Index>(b) * lin, lin) =
            x.row(b0 + b).segment(static_cast<Eigen::Index>(c) * lin, lin);
    cols.noalias() = w.transpose() * xm;  // (cout * k) x (n * lin)
    for (int b = 0; b < n; ++b) {
      std::fill(full.begin(), full.end(), 0.0);
      for (int o = 0; o < cout; ++o)
        for (int kk = 0; kk < k; ++kk) {
          const double* row =
              cols.row(static_cast<Eigen::Index>(o) * k + kk).data() + static_cast<std::ptrdiff_t>(b) * lin;
          double* dst = full.data() + static_cast<std::ptrdiff_t>(o) * lfull + kk;
          for (int t = 0; t < lin; ++t) dst[t * st] += row[t];
        }
      for (int o = 0; o < cout; ++o) {
        double* dst = y.row(b0 + b).data() + static_cast<std::ptrdiff_t>(o) * lout;
        const double* src = full.data() + static_cast<std::ptrdiff_t>(o) * lfull + s_.crop_left;
        for (int j = 0; j < lout; ++j) dst[j] = src[j] + bias_.value[o];
      }
    }
  }
  return y;
}

Matrix ConvTranspose1d::backward(const Matrix& g) {
  const int batch = static_cast<int>(g.rows());
  const int cin = s_.in_channels, cout = s_.out_channels, k = s_.kernel, st = s_.stride;
  const int lin = s_.length, lout = s_.out_length();
  ConstMat w(weight_.value.data(), cin, static_cast<Eigen::Index>(cout) * k);
  Mat gw(weight_.grad.data(), cin, static_cast<Eigen::Index>(cout) * k);
  Matrix gx(batch, in_features());

  for (int b = 0; b < batch; ++b)
    for (int o = 0; o < cout; ++o)
      bias_.grad[o] += g.row(b).segment(static_cast<Eigen::Index>(o) * lout, lout).sum();

  const int chunk = chunk_rows(static_cast<long>(cout) * k * lin);
  Matrix xm, gcols, gxm;
  for (int b0 = 0; b0 < batch; b0 += chunk) {
    const int n = std::min(chunk, batch - b0);
    xm.resize(cin, static_cast<Eigen::Index>(n) * lin);
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < cin; ++c)
        xm.row(c).segment(static_cast<Eigen::Index>(b) * lin, lin) =
            input_.row(b0 + b).segment(static_cast<Eigen::Index>(c) * lin, lin);
    gcols.setZero(static_cast<Eigen::Index>(cout) * k, static_cast<Eigen::Index>(n) * lin);
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < cout; ++o) {
        const double* go = g.row(b0 + b).data() + static_cast<std::ptrdiff_t>(o) * lout;
        for (int kk = 0; kk < k; ++kk) {
          double* row =
              gcols.row(static_cast<Eigen::Index>(o) * k + kk).data() + static_cast<std::ptrdiff_t>(b) * lin;
          for (int t = 0; t < lin; ++t) {
            const int j = t * st + kk - s_.crop_left;
            if (j >= 0 && j < lout) row[t] = go[j];
          }
        }
      }
    gw.noalias() += xm * gcols.transpose();
    gxm.noalias() = w * gcols;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < cin; ++c)
        gx.row(b0 + b).segment(static_cast<Eigen::Index>(c) * lin, lin) =
            gxm.row(c).segment(static_cast<Eigen::Index>(b) * lin, lin);
  }
  return gx;
}

std::string ConvTranspose1d::describe() const {
  std::ostringstream os;
  os << "ConvTranspose1d(" << s_.in_channels << "x" << s_.length << " -> " << s_.out_channels
     << "x" << s_.out_length() << ", kernel " << s_.kernel << ", stride " << s_.stride
     << ", crop " << s_.crop_left << "/" << s_.crop_right << ")";
  return os.str();
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(const VolumeShape& input, int out_channels)
    : in_(input),
      out_channels_(out_channels),
      weight_("weight", {out_channels, input.channels, 3, 3, 3}),
      bias_("bias", {out_channels}) {}

void Conv3d::reset(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_.channels * 27));
  init_uniform(weight_, bound, rng);
  init_uniform(bias_, bound, rng);
}

void Conv3d::im2col(const double* x, Matrix& cols) const {
  const int D = in_.depth, T = in_.time, F = in_.freq;
  cols.setZero(static_cast<Eigen::Index>(in_.channels) * 27, in_.plane());
  for (int c = 0; c < in_.channels; ++c)
    for (int kd = 0; kd < 3; ++kd)
      for (int kt = 0; kt < 3; ++kt)
        for (int kf = 0; kf < 3; ++kf) {
          double* row = cols.row(static_cast<Eigen::Index>(c) * 27 + kd * 9 + kt * 3 + kf).data();
          const int f_lo = std::max(0, 1 - kf), f_hi = std::min(F, F + 1 - kf);
          for (int d = 0; d < D; ++d) {
            const int sd = d + kd - 1;
            if (sd < 0 || sd >= D) continue;
            for (int t = 0; t < T; ++t) {
              const int st = t + kt - 1;
              if (st < 0 || st >= T) continue;
              const double* src = x + ((static_cast<std::ptrdiff_t>(c) * D + sd) * T + st) * F + kf - 1;
              double* dst = row + (static_cast<std::ptrdiff_t>(d) * T + t) * F;
              for (int f = f_lo; f < f_hi; ++f) dst[f] = src[f];
            }
          }
        }
}

void Conv3d::col2im(const Matrix& cols, double* x) const {
  const int D = in_.depth, T = in_.time, F = in_.freq;
  for (int c = 0; c < in_.channels; ++c)
    for (int kd = 0; kd < 3; ++kd)
      for (int kt = 0; kt < 3; ++kt)
        for (int kf = 0; kf < 3; ++kf) {
          const double* row =
              cols.row(static_cast<Eigen::Index>(c) * 27 + kd * 9 + kt * 3 + kf).data();
          const int f_lo = std::max(0, 1 - kf), f_hi = std::min(F, F + 1 - kf);
          for (int d = 0; d < D; ++d) {
            const int sd = d + kd - 1;
            if (sd < 0 || sd >= D) continue;
            for (int t = 0; t < T; ++t) {
              const int st = t + kt - 1;
              if (st < 0 || st >= T) continue;
              double* dst = x + ((static_cast<std::ptrdiff_t>(c) * D + sd) * T + st) * F + kf - 1;
              const double* src = row + (static_cast<std::ptrdiff_t>(d) * T + t) * F;
              for (int f = f_lo; f < f_hi; ++f) dst[f] += src[f];
            }
          }
        }
}

Matrix Conv3d::forward(const Matrix& x) {
  check_input(x, in_features(), "Conv3d");
  input_ = x;
  const int plane = in_.plane();
  ConstMat w(weight_.value.data(), out_channels_, static_cast<Eigen::Index>(in_.channels) * 27);
  ConstVec bias(bias_.value.data(), out_channels_);
  Matrix y(x.rows(), out_features());
  Matrix cols;
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    im2col(x.row(b).data(), cols);
    Mat out(y.row(b).data(), out_channels_, plane);
    out.noalias() = w * cols;
    out.colwise() += bias;
  }
  return y;
}

Matrix Conv3d::backward(const Matrix& g) {
  const int plane = in_.plane();
  ConstMat w(weight_.value.data(), out_channels_, static_cast<Eigen::Index>(in_.channels) * 27);
  Mat gw(weight_.grad.data(), out_channels_, static_cast<Eigen::Index>(in_.channels) * 27);
  Vec gb(bias_.grad.data(), out_channels_);
  Matrix gx = Matrix::Zero(g.rows(), in_features());
  Matrix cols, gcols;
  for (Eigen::Index b = 0; b < g.rows(); ++b) {
    ConstMat gy(g.row(b).data(), out_channels_, plane);
    im2col(input_.row(b).data(), cols);
    gw.noalias() += gy * cols.transpose();
    gb += gy.rowwise().sum();
    gcols.noalias() = w.transpose() * gy;
    col2im(gcols, gx.row(b).data());
  }
  return gx;
}

std::string Conv3d::describe() const {
  std::ostringstream os;
  os << "Conv3d(" << in_.channels << "x" << in_.depth << "x" << in_.time << "x" << in_.freq
     << " -> " << out_channels_ << " channels, kernel 3x3x3, pad 1)";
  return os.str();
}

// ------------------------------------------------------------- MaxPool3d

MaxPool3d::MaxPool3d(const VolumeShape& input) : in_(input) {
  if (input.time < 2 || input.freq < 2) fail("ShapeMismatch", "MaxPool3d input too small");
}

Matrix MaxPool3d::forward(const Matrix& x) {
  check_input(x, in_features(), "MaxPool3d");
  const VolumeShape o = output_shape();
  const int T = in_.time, F = in_.freq;
  Matrix y(x.rows(), o.size());
  argmax_.assign(static_cast<std::size_t>(x.rows()) * o.size(), 0);
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* xb = x.row(b).data();
    double* yb = y.row(b).data();
    int* ab = argmax_.data() + b * o.size();
    int out = 0;
    for (int cd = 0; cd < in_.channels * in_.depth; ++cd)
      for (int t = 0; t < o.time; ++t)
        for (int f = 0; f < o.freq; ++f, ++out) {
          int best = (cd * T + 2 * t) * F + 2 * f;
          for (int dt = 0; dt < 2; ++dt)
            for (int df = 0; df < 2; ++df) {
              const int idx = (cd * T + 2 * t + dt) * F + 2 * f + df;
              if (xb[idx] > xb[best]) best = idx;
            }
          yb[out] = xb[best];
          ab[out] = best;
        }
  }
  return y;
}

Matrix MaxPool3d::backward(const Matrix& g) {
  Matrix gx = Matrix::Zero(g.rows(), in_features());
  const int n = out_features();
  for (Eigen::Index b = 0; b < g.rows(); ++b) {
    const int* ab = argmax_.data() + b * n;
    for (int i = 0; i < n; ++i) gx(b, ab[i]) += g(b, i);
  }
  return gx;
}

std::string MaxPool3d::describe() const { return "MaxPool3d(1x2x2)"; }

// ------------------------------------------------------ VolumeToSequence

int VolumeToSequence::source_index(int t, int j) const {
  const int f = j % in_.freq;
  const int cd = j / in_.freq;
  return (cd * in_.time + t) * in_.freq + f;
}

Matrix VolumeToSequence::forward(const Matrix& x) {
  check_input(x, in_features(), "VolumeToSequence");
  const int width = step_features();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b)
    for (int t = 0; t < in_.time; ++t)
      for (int j = 0; j < width; ++j) y(b, t * width + j) = x(b, source_index(t, j));
  return y;
}

Matrix VolumeToSequence::backward(const Matrix& g) {
  const int width = step_features();
  Matrix gx(g.rows(), g.cols());
  for (Eigen::Index b = 0; b < g.rows(); ++b)
    for (int t = 0; t < in_.time; ++t)
      for (int j = 0; j < width; ++j) gx(b, source_index(t, j)) = g(b, t * width + j);
  return gx;
}

std::string VolumeToSequence::describe() const {
  return "VolumeToSequence(" + std::to_string(in_.time) + " steps x " +
         std::to_string(step_features()) + ")";
}

// ------------------------------------------------------------ Sequential

Matrix Sequential::forward(const Matrix& x) {
  Matrix h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

Matrix Sequential::backward(const Matrix& grad_out) {
  Matrix g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_)
    for (Param* p : layer->params()) out.push_back(p);
  return out;
}

void Sequential::reset(Rng& rng) {
  for (auto& layer : layers_) layer->reset(rng);
}

void Sequential::zero_grad() {
  for (Param* p : params()) p->zero_grad();
}

int Sequential::in_features() const { return layers_.front()->in_features(); }
int Sequential::out_features() const { return layers_.back()->out_features(); }

std::vector<std::string> Sequential::describe() const {
  std::vector<std::string> out;
  for (const auto& layer : layers_) out.push_back(layer->describe());
  return out;
}

void Sequential::name_params(const std::string& prefix) {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (Param* p : layers_[i]->params()) p->name = prefix + "." + std::to_string(i) + "." + p->name;
}

}  // namespace deepest::nn
