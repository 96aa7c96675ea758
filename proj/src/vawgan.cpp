#include "deepest/vawgan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "deepest/error.hpp"
#include "deepest/nn/optim.hpp"

namespace deepest {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_width(int width, const std::string& where) {
  if (width < 1) fail("InvalidConfig", where + " collapses the frame width to " + std::to_string(width));
}

double scaled_log_f0(double hz, double lo, double hi) {
  if (!(hz > 0.0)) return 0.0;
  return std::clamp((std::log(hz) - lo) / std::max(hi - lo, 1e-12), 0.0, 1.0);
}

Matrix constant_column(Eigen::Index rows, double v) { return Matrix::Constant(rows, 1, v); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------- configs

nlohmann::ordered_json VcArch::to_json() const {
  nlohmann::ordered_json j;
  j["frame_dim"] = frame_dim;
  j["latent_dim"] = latent_dim;
  j["embedding_dim"] = embedding_dim;
  j["slope"] = slope;
  j["encoder"] = {{"channels", encoder_channels},
                  {"kernel", encoder_kernel},
                  {"stride", encoder_stride},
                  {"pads", encoder_pads}};
  j["decoder"] = {{"fc_channels", decoder_fc_channels}, {"fc_width", decoder_fc_width},
                  {"channels", decoder_channels},       {"kernels", decoder_kernels},
                  {"stride", decoder_stride},           {"crops", decoder_crops},
                  {"output_kernel", output_kernel}};
  j["critic"] = {{"channels", critic_channels},
                 {"kernels", critic_kernels},
                 {"stride", critic_stride},
                 {"pads", critic_pads}};
  return j;
}

VcArch VcArch::from_json(const nlohmann::json& j) {
  VcArch a;
  try {
    a.frame_dim = j.value("frame_dim", a.frame_dim);
    a.latent_dim = j.value("latent_dim", a.latent_dim);
    a.embedding_dim = j.value("embedding_dim", a.embedding_dim);
    a.slope = j.value("slope", a.slope);
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      a.encoder_channels = e.value("channels", a.encoder_channels);
      a.encoder_kernel = e.value("kernel", a.encoder_kernel);
      a.encoder_stride = e.value("stride", a.encoder_stride);
      a.encoder_pads = e.value("pads", a.encoder_pads);
    }
    if (j.contains("decoder")) {
      const auto& d = j["decoder"];
      a.decoder_fc_channels = d.value("fc_channels", a.decoder_fc_channels);
      a.decoder_fc_width = d.value("fc_width", a.decoder_fc_width);
      a.decoder_channels = d.value("channels", a.decoder_channels);
      a.decoder_kernels = d.value("kernels", a.decoder_kernels);
      a.decoder_stride = d.value("stride", a.decoder_stride);
      a.decoder_crops = d.value("crops", a.decoder_crops);
      a.output_kernel = d.value("output_kernel", a.output_kernel);
    }
    if (j.contains("critic")) {
      const auto& c = j["critic"];
      a.critic_channels = c.value("channels", a.critic_channels);
      a.critic_kernels = c.value("kernels", a.critic_kernels);
      a.critic_stride = c.value("stride", a.critic_stride);
      a.critic_pads = c.value("pads", a.critic_pads);
    }
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("bad architecture config: ") + e.what());
  }
  return a;
}

nlohmann::ordered_json VcTrainConfig::to_json() const {
  return {{"epochs", epochs},         {"vae_epochs", vae_epochs}, {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"lambda_rec", lambda_rec}, {"lambda_adv", lambda_adv},
          {"n_critic", n_critic},     {"gp_weight", gp_weight},   {"seed", seed}};
}

VcTrainConfig VcTrainConfig::from_json(const nlohmann::json& j, VcTrainConfig c) {
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.vae_epochs = j.value("vae_epochs", c.vae_epochs);
    c.batch_size = j.value("batch_size", j.value("batch", c.batch_size));
    c.learning_rate = j.value("learning_rate", j.value("lr", c.learning_rate));
    c.lambda_rec = j.value("lambda_rec", c.lambda_rec);
    c.lambda_adv = j.value("lambda_adv", c.lambda_adv);
    c.n_critic = j.value("n_critic", c.n_critic);
    c.gp_weight = j.value("gp_weight", c.gp_weight);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("bad training config: ") + e.what());
  }
  if (c.epochs < 0 || c.vae_epochs < 0 || c.batch_size < 1 || c.n_critic < 0 || !(c.learning_rate > 0))
    fail("InvalidConfig", "training config values out of range");
  return c;
}

VcTrainConfig VcTrainConfig::from_json(const nlohmann::json& j) { return from_json(j, VcTrainConfig{}); }

std::string training_log_header(const VcTrainConfig& c) {
  std::ostringstream s;
  s << "# epochs=" << c.epochs << " batch=" << c.batch_size << " lr=" << c.learning_rate
    << " seed=" << c.seed;
  return s.str();
}

double gaussian_kl(const Matrix& mu, const Matrix& log_var) {
  if (mu.rows() == 0) return 0.0;
  const double total =
      -0.5 * (1.0 + log_var.array() - mu.array().square() - log_var.array().exp()).sum();
  return total / static_cast<double>(mu.rows());
}

double reconstruction_error(const Matrix& x_bar, const Matrix& x) {
  if (x_bar.rows() != x.rows() || x_bar.cols() != x.cols())
    fail("ShapeMismatch", "reconstruction and target shapes differ");
  return x.size() ? (x_bar - x).array().square().mean() : 0.0;
}

// ---------------------------------------------------------------- data

void VcTrainingData::add_utterance(const std::string& id, Emotion emotion, const Matrix& log_sp,
                                   const Vector& f0_hz, const Vector& phi) {
  if (log_sp.rows() != f0_hz.size())
    fail("ShapeMismatch", id + ": spectral and F0 frame counts differ");
  if (!ids_.empty() && (log_sp.cols() != static_cast<Eigen::Index>(rows_.front().size()) ||
                        phi.size() != phi_.front().size()))
    fail("ShapeMismatch", id + ": frame or embedding width differs from earlier utterances");
  const std::size_t u = ids_.size();
  ids_.push_back(id);
  emotions_.push_back(emotion);
  phi_.push_back(phi);
  for (Eigen::Index t = 0; t < log_sp.rows(); ++t) {
    std::vector<float> row(static_cast<std::size_t>(log_sp.cols()));
    for (Eigen::Index d = 0; d < log_sp.cols(); ++d) row[static_cast<std::size_t>(d)] = static_cast<float>(log_sp(t, d));
    rows_.push_back(std::move(row));
    f0_.push_back(f0_hz(t));
    frame_utt_.push_back(u);
  }
}

std::pair<double, double> VcTrainingData::log_f0_range() const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double f : f0_)
    if (f > 0.0) {
      lo = std::min(lo, std::log(f));
      hi = std::max(hi, std::log(f));
    }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  return {lo, hi};
}

VcBatch VcTrainingData::batch(const std::vector<std::size_t>& idx, double lo, double hi) const {
  VcBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  const auto dim = rows_.empty() ? 0 : static_cast<Eigen::Index>(rows_.front().size());
  const auto pdim = phi_.empty() ? 0 : phi_.front().size();
  b.frames.resize(n, dim);
  b.phi.resize(n, pdim);
  b.f0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t k = idx[static_cast<std::size_t>(i)];
    const auto& row = rows_[k];
    for (Eigen::Index d = 0; d < dim; ++d) b.frames(i, d) = row[static_cast<std::size_t>(d)];
    b.phi.row(i) = phi_[frame_utt_[k]].transpose();
    b.f0(i) = scaled_log_f0(f0_[k], lo, hi);
  }
  return b;
}

// ---------------------------------------------------------------- networks

namespace {

struct Penalty {
  double value = 0.0;
  Matrix direction;  // d penalty / d (critic input gradient), per row
};

Penalty gradient_penalty(const Matrix& g, double weight) {
  Penalty p;
  const double B = static_cast<double>(g.rows());
  p.direction.resize(g.rows(), g.cols());
  for (Eigen::Index b = 0; b < g.rows(); ++b) {
    const double n = g.row(b).norm();
    p.value += (n - 1.0) * (n - 1.0) / B;
    const double k = n > 1e-12 ? 2.0 * weight * (n - 1.0) / (n * B) : 0.0;
    p.direction.row(b) = k * g.row(b);
  }
  p.value *= weight;
  return p;
}

}  // namespace


struct VcModel::Net {
  nn::Sequential encoder, decoder, critic;
  int latent = 0;

  std::vector<nn::Param*> generator_params() {
    auto out = encoder.params();
    for (auto* p : decoder.params()) out.push_back(p);
    return out;
  }
  std::vector<nn::Param*> all_params() {
    auto out = generator_params();
    for (auto* p : critic.params()) out.push_back(p);
    return out;
  }

  LatentCode encode(const Matrix& x, nn::Rng* rng) {
    const Matrix h = encoder.forward(x);
    LatentCode c;
    c.mu = h.leftCols(latent);
    c.log_var = h.rightCols(latent);
    if (rng) {
      std::normal_distribution<double> n(0.0, 1.0);
      c.eps.resize(c.mu.rows(), c.mu.cols());
      for (Eigen::Index i = 0; i < c.eps.size(); ++i) c.eps.data()[i] = n(*rng);
    } else {
      c.eps = Matrix::Zero(c.mu.rows(), c.mu.cols());
    }
    c.sample = c.mu + ((0.5 * c.log_var.array()).exp() * c.eps.array()).matrix();
    return c;
  }

  Matrix decode(const Matrix& z, const Matrix& phi, const Vector& f0) {
    Matrix in(z.rows(), z.cols() + phi.cols() + 1);
    in << z, phi, f0;
    return decoder.forward(in);
  }

  // Backward of w_kl * kl + w_rec * recon (+ extra gradient on x_bar) into
  // the encoder and decoder, given the caches of the latest forward pass.
  void generator_backward(const LatentCode& c, const Matrix& x, const Matrix& x_bar, double w_kl,
                          double w_rec, const Matrix* extra) {
    const double B = static_cast<double>(x.rows());
    Matrix d_xbar = (2.0 * w_rec / (B * static_cast<double>(x.cols()))) * (x_bar - x);
    if (extra) d_xbar += *extra;
    const Matrix d_in = decoder.backward(d_xbar);
    const auto dz = d_in.leftCols(latent).array();
    const auto sigma = (0.5 * c.log_var.array()).exp();
    Matrix d_h(x.rows(), 2 * latent);
    d_h.leftCols(latent) = (dz + (w_kl / B) * c.mu.array()).matrix();
    d_h.rightCols(latent) =
        (dz * c.eps.array() * 0.5 * sigma - (0.5 * w_kl / B) * (1.0 - c.log_var.array().exp())).matrix();
    encoder.backward(d_h);
  }

  // Critic input gradient at x (rows are independent samples).
  Matrix critic_input_gradient(const Matrix& x) {
    critic.forward(x);
    Matrix g = critic.backward(constant_column(x.rows(), 1.0));
    critic.zero_grad();
    return g;
  }

  // Adds d penalty / d critic params to the critic gradients and returns the
  // penalty. With v_b = d penalty / d g_b held fixed, the gradient is
  // d/dmu sum_b v_b . grad_x Y(x_hat_b), a directional derivative of Y that
  // a central difference along v evaluates exactly wherever Y is piecewise
  // linear in its input.
  double accumulate_penalty_gradient(const Matrix& x_hat, double weight) {
    const Penalty gp = gradient_penalty(critic_input_gradient(x_hat), weight);
    const double scale = gp.direction.cwiseAbs().maxCoeff();
    if (scale > 0.0) {
      const double h = 1e-6 / scale;
      critic.forward(x_hat + h * gp.direction);
      critic.backward(constant_column(x_hat.rows(), 0.5 / h));
      critic.forward(x_hat - h * gp.direction);
      critic.backward(constant_column(x_hat.rows(), -0.5 / h));
    }
    return gp.value;
  }
};


VcModel::VcModel() : lock_(std::make_unique<std::mutex>()) {}
VcModel::VcModel(VcModel&&) noexcept = default;
VcModel& VcModel::operator=(VcModel&&) noexcept = default;
VcModel::~VcModel() = default;

VcModel::VcModel(const VcArch& a, std::uint64_t seed)
    : arch_(a), net_(std::make_unique<Net>()), lock_(std::make_unique<std::mutex>()) {
  train_config_.seed = seed;
  if (a.encoder_channels.size() != a.encoder_pads.size() ||
      a.decoder_channels.size() != a.decoder_kernels.size() ||
      a.decoder_channels.size() != a.decoder_crops.size() ||
      a.critic_channels.size() != a.critic_kernels.size() ||
      a.critic_channels.size() != a.critic_pads.size())
    fail("InvalidConfig", "per-layer architecture lists differ in length");
  Net& n = *net_;
  n.latent = a.latent_dim;

  int channels = 1, width = a.frame_dim;
  for (std::size_t i = 0; i < a.encoder_channels.size(); ++i) {
    const nn::Conv1dShape s{channels, a.encoder_channels[i], width, a.encoder_kernel, a.encoder_stride,
                            a.encoder_pads[i], a.encoder_pads[i]};
    require_width(s.out_length(), "encoder layer " + std::to_string(i));
    auto& conv = n.encoder.add<nn::Conv1d>(s);
    n.encoder.add<nn::LeakyReLU>(conv.out_features(), a.slope);
    channels = s.out_channels;
    width = s.out_length();
  }
  n.encoder.add<nn::Linear>(channels * width, 2 * a.latent_dim);

  n.decoder.add<nn::Linear>(a.decoder_input_dim(), a.decoder_fc_channels * a.decoder_fc_width);
  n.decoder.add<nn::LeakyReLU>(a.decoder_fc_channels * a.decoder_fc_width, a.slope);
  channels = a.decoder_fc_channels;
  width = a.decoder_fc_width;
  for (std::size_t i = 0; i < a.decoder_channels.size(); ++i) {
    const nn::ConvTranspose1dShape s{channels, a.decoder_channels[i], width, a.decoder_kernels[i],
                                     a.decoder_stride, a.decoder_crops[i], a.decoder_crops[i]};
    require_width(s.out_length(), "decoder layer " + std::to_string(i));
    auto& deconv = n.decoder.add<nn::ConvTranspose1d>(s);
    n.decoder.add<nn::LeakyReLU>(deconv.out_features(), a.slope);
    channels = s.out_channels;
    width = s.out_length();
  }
  const int half = (a.output_kernel - 1) / 2;
  const nn::Conv1dShape out{channels, 1, width, a.output_kernel, 1, half, a.output_kernel - 1 - half};
  if (out.out_length() != a.frame_dim)
    fail("InvalidConfig", "decoder produces width " + std::to_string(out.out_length()) + ", expected " +
                              std::to_string(a.frame_dim));
  n.decoder.add<nn::Conv1d>(out);

  channels = 1;
  width = a.frame_dim;
  for (std::size_t i = 0; i < a.critic_channels.size(); ++i) {
    const nn::Conv1dShape s{channels, a.critic_channels[i], width, a.critic_kernels[i], a.critic_stride,
                            a.critic_pads[i], a.critic_pads[i]};
    require_width(s.out_length(), "critic layer " + std::to_string(i));
    auto& conv = n.critic.add<nn::Conv1d>(s);
    n.critic.add<nn::LeakyReLU>(conv.out_features(), a.slope);
    channels = s.out_channels;
    width = s.out_length();
  }
  n.critic.add<nn::Linear>(channels * width, 1);

  n.encoder.name_params("encoder");
  n.decoder.name_params("decoder");
  n.critic.name_params("critic");
  nn::Rng rng(seed);
  n.encoder.reset(rng);
  n.decoder.reset(rng);
  n.critic.reset(rng);
}

LatentCode VcModel::encode(const Matrix& x, nn::Rng* rng) const {
  if (x.cols() != arch_.frame_dim)
    fail("ShapeMismatch", "encoder expects " + std::to_string(arch_.frame_dim) + " columns, got " +
                              std::to_string(x.cols()));
  std::lock_guard guard(*lock_);
  return net_->encode(x, rng);
}

Matrix VcModel::decode(const Matrix& z, const Matrix& phi, const Vector& f0) const {
  if (z.cols() != arch_.latent_dim || phi.cols() != arch_.embedding_dim || phi.rows() != z.rows() ||
      f0.size() != z.rows())
    fail("ShapeMismatch", "decoder expects (B x " + std::to_string(arch_.latent_dim) + ", B x " +
                              std::to_string(arch_.embedding_dim) + ", B), got (" +
                              std::to_string(z.rows()) + " x " + std::to_string(z.cols()) + ", " +
                              std::to_string(phi.rows()) + " x " + std::to_string(phi.cols()) + ", " +
                              std::to_string(f0.size()) + ")");
  std::lock_guard guard(*lock_);
  Matrix out = net_->decode(z, phi, f0);
  if (!all_finite(out)) fail("NonFiniteOutput", "decoder produced non-finite values");
  return out;
}

Vector VcModel::discriminate(const Matrix& x) const {
  if (x.cols() != arch_.frame_dim)
    fail("ShapeMismatch", "critic expects " + std::to_string(arch_.frame_dim) + " columns");
  if (!all_finite(x)) fail("NonFiniteOutput", "critic input contains non-finite values");
  std::lock_guard guard(*lock_);
  Vector s = net_->critic.forward(x).col(0);
  if (!s.allFinite()) fail("NonFiniteOutput", "critic produced non-finite scores");
  return s;
}

LossTerms VcModel::loss_terms(const VcBatch& batch, nn::Rng& rng) const {
  if (batch.frames.rows() == 0) fail("EmptyTrainSet", "empty batch");
  if (batch.frames.cols() != arch_.frame_dim || batch.phi.cols() != arch_.embedding_dim ||
      batch.phi.rows() != batch.frames.rows() || batch.f0.size() != batch.frames.rows())
    fail("ShapeMismatch", "batch shapes do not match the architecture");
  std::lock_guard guard(*lock_);
  Net& n = *net_;
  const LatentCode c = n.encode(batch.frames, &rng);
  const Matrix x_bar = n.decode(c.sample, batch.phi, batch.f0);
  LossTerms t;
  t.kl = gaussian_kl(c.mu, c.log_var);
  t.recon = reconstruction_error(x_bar, batch.frames);
  const double real = n.critic.forward(batch.frames).mean();
  const double fake = n.critic.forward(x_bar).mean();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x_hat(batch.frames.rows(), batch.frames.cols());
  for (Eigen::Index b = 0; b < x_hat.rows(); ++b) {
    const double e = u(rng);
    x_hat.row(b) = e * batch.frames.row(b) + (1.0 - e) * x_bar.row(b);
  }
  const Penalty gp = gradient_penalty(n.critic_input_gradient(x_hat), train_config_.gp_weight);
  t.adv_g = -fake;
  t.adv_d = fake - real + gp.value;
  for (auto [name, v] : {std::pair{"kl", t.kl}, {"recon", t.recon}, {"adv_g", t.adv_g}, {"adv_d", t.adv_d}})
    if (!std::isfinite(v)) fail("NonFiniteLoss", std::string("loss term ") + name + " is not finite");
  return t;
}

Vector VcModel::f0_condition(const Vector& f0_hz) const {
  Vector out(f0_hz.size());
  for (Eigen::Index i = 0; i < f0_hz.size(); ++i) out(i) = scaled_log_f0(f0_hz(i), log_f0_min_, log_f0_max_);
  return out;
}

void VcModel::set_f0_range(double lo, double hi) {
  log_f0_min_ = lo;
  log_f0_max_ = hi;
}

double VcModel::gradient_check(const VcBatch& batch, GradientObjective objective, std::uint64_t seed,
                               int samples, double step) {
  std::lock_guard guard(*lock_);
  Net& n = *net_;
  const double w_kl = objective == GradientObjective::kRecon ? 0.0 : 1.0;
  const double w_rec = objective == GradientObjective::kKl ? 0.0 : 1.0;
  nn::Rng rng(seed);
  const Matrix eps = n.encode(batch.frames, &rng).eps;

  auto forward = [&] {
    LatentCode c = n.encode(batch.frames, nullptr);
    c.eps = eps;
    c.sample = c.mu + ((0.5 * c.log_var.array()).exp() * eps.array()).matrix();
    const Matrix x_bar = n.decode(c.sample, batch.phi, batch.f0);
    const double loss = w_kl * gaussian_kl(c.mu, c.log_var) +
                        w_rec * reconstruction_error(x_bar, batch.frames);
    return std::tuple{loss, c, x_bar};
  };

  auto params = n.generator_params();
  for (auto* p : params) p->zero_grad();
  {
    auto [loss, c, x_bar] = forward();
    n.generator_backward(c, batch.frames, x_bar, w_kl, w_rec, nullptr);
  }
  const std::size_t total = nn::parameter_count(params);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    std::size_t k = pick(rng);
    nn::Param* p = params.front();
    for (auto* q : params) {
      if (k < q->size()) {
        p = q;
        break;
      }
      k -= q->size();
    }
    const double keep = p->value[k];
    p->value[k] = keep + step;
    const double up = std::get<0>(forward());
    p->value[k] = keep - step;
    const double down = std::get<0>(forward());
    p->value[k] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = p->grad[k];
    worst = std::max(worst, std::fabs(numeric - analytic) /
                                std::max({std::fabs(numeric), std::fabs(analytic), 1e-6}));
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

double VcModel::penalty_gradient_check(const Matrix& x_hat, std::uint64_t seed, int samples,
                                       double step) {
  if (x_hat.cols() != arch_.frame_dim) fail("ShapeMismatch", "critic expects 513 columns");
  std::lock_guard guard(*lock_);
  Net& n = *net_;
  const double weight = train_config_.gp_weight;
  auto params = n.critic.params();
  for (auto* p : params) p->zero_grad();
  n.accumulate_penalty_gradient(x_hat, weight);
  std::vector<nn::ParamBuffer> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  auto penalty = [&] { return gradient_penalty(n.critic_input_gradient(x_hat), weight).value; };

  nn::Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, nn::parameter_count(params) - 1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    std::size_t k = pick(rng), t = 0;
    while (k >= params[t]->size()) k -= params[t++]->size();
    nn::Param* p = params[t];
    const double keep = p->value[k];
    p->value[k] = keep + step;
    const double up = penalty();
    p->value[k] = keep - step;
    const double down = penalty();
    p->value[k] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[t][k];
    worst = std::max(worst, std::fabs(numeric - a) / std::max({std::fabs(numeric), std::fabs(a), 1e-6}));
  }
  for (auto* p : params) p->zero_grad();
  return worst;
}

std::uint64_t VcModel::checksum() const { return net_ ? nn::params_checksum(net_->all_params()) : 0; }

std::size_t VcModel::parameter_count() const {
  return net_ ? nn::parameter_count(net_->all_params()) : 0;
}

nlohmann::ordered_json VcModel::architecture_json() const {
  nlohmann::ordered_json j = arch_.to_json();
  if (net_) {
    j["layers"] = {{"encoder", net_->encoder.describe()},
                   {"decoder", net_->decoder.describe()},
                   {"critic", net_->critic.describe()}};
  }
  return j;
}

void VcModel::save(const std::filesystem::path& dir) const {
  if (!net_) fail("UntrainedModel", "no model to save");
  std::filesystem::create_directories(dir);
  nn::save_params(dir / "params.bin", net_->all_params());
  nlohmann::ordered_json j;
  j["kind"] = "vawgan";
  j["architecture"] = architecture_json();
  j["training"] = train_config_.to_json();
  j["log_f0_range"] = {log_f0_min_, log_f0_max_};
  j["seen_emotions"] = nlohmann::ordered_json::array();
  for (Emotion e : seen_emotions_) j["seen_emotions"].push_back(to_string(e));
  j["trained"] = trained_;
  j["parameter_count"] = parameter_count();
  j["checksum"] = checksum();
  std::ofstream out(dir / "config.json");
  if (!out) fail("IoError", "cannot write " + (dir / "config.json").string());
  out << j.dump(2) << '\n';

  std::ofstream log(dir / "training_log.csv");
  log << training_log_header(train_config_) << '\n' << "epoch,kl,recon,adv_g,adv_d\n";
  log << std::setprecision(17);
  for (const auto& e : log_)
    log << e.epoch << ',' << e.kl << ',' << e.recon << ',' << e.adv_g << ',' << e.adv_d << '\n';
}

VcModel VcModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) fail("MissingCheckpoint", "no conversion checkpoint at " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("CorruptCheckpoint", (dir / "config.json").string() + ": " + e.what());
  }
  if (j.value("kind", "") != "vawgan") fail("CorruptCheckpoint", dir.string() + " is not a conversion checkpoint");
  const VcTrainConfig cfg = VcTrainConfig::from_json(j.at("training"));
  VcModel m(VcArch::from_json(j.at("architecture")), cfg.seed);
  m.train_config_ = cfg;
  m.log_f0_min_ = j.at("log_f0_range").at(0).get<double>();
  m.log_f0_max_ = j.at("log_f0_range").at(1).get<double>();
  m.trained_ = j.value("trained", true);
  for (const auto& e : j.value("seen_emotions", nlohmann::json::array()))
    m.seen_emotions_.push_back(parse_emotion(e.get<std::string>()));
  nn::load_params(dir / "params.bin", m.net_->all_params());

  std::ifstream log(dir / "training_log.csv");
  std::string line;
  while (std::getline(log, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
    std::istringstream ss(line);
    VcEpoch e;
    char comma;
    ss >> e.epoch >> comma;
    std::vector<double> vals;
    std::string field;
    while (std::getline(ss, field, ',')) vals.push_back(field == "nan" || field == "-nan" ? kNaN : std::stod(field));
    if (vals.size() == 4) {
      e.kl = vals[0];
      e.recon = vals[1];
      e.adv_g = vals[2];
      e.adv_d = vals[3];
      m.log_.push_back(e);
    }
  }
  return m;
}

// ---------------------------------------------------------------- training

VcModel train_vc(const VcTrainingData& data, const VcTrainConfig& cfg, const VcArch& arch) {
  if (data.frames() == 0) fail("EmptyTrainSet", "no training frames for the conversion model");
  VcModel model(arch, cfg.seed);
  model.train_config_ = cfg;
  const auto [lo, hi] = data.log_f0_range();
  model.set_f0_range(lo, hi);
  model.seen_emotions_ = data.emotions();
  std::sort(model.seen_emotions_.begin(), model.seen_emotions_.end());
  model.seen_emotions_.erase(std::unique(model.seen_emotions_.begin(), model.seen_emotions_.end()),
                             model.seen_emotions_.end());
  VcModel::Net& n = *model.net_;

  nn::RmsProp opt_g(n.generator_params(), cfg.learning_rate);
  nn::RmsProp opt_d(n.critic.params(), cfg.learning_rate);
  nn::Rng rng(cfg.seed ^ 0x7a3b);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::size_t> order(data.frames());
  std::iota(order.begin(), order.end(), 0);

  auto check = [](double v, const char* term, int epoch) {
    if (!std::isfinite(v))
      fail("DivergedTraining", std::string(term) + " became non-finite in epoch " + std::to_string(epoch));
  };

  long group_step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const bool adversarial = epoch > cfg.vae_epochs;
    double kl_sum = 0, rec_sum = 0, g_sum = 0, d_sum = 0;
    double gen_frames = 0, g_steps = 0, d_steps = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(end));
      const VcBatch b = data.batch(idx, lo, hi);
      const double B = static_cast<double>(b.frames.rows());
      const bool critic_turn = adversarial && cfg.n_critic > 0 && group_step % (cfg.n_critic + 1) < cfg.n_critic;
      if (adversarial) ++group_step;

      if (critic_turn) {
        const LatentCode c = n.encode(b.frames, &rng);
        const Matrix x_bar = n.decode(c.sample, b.phi, b.f0);
        Matrix x_hat(b.frames.rows(), b.frames.cols());
        for (Eigen::Index r = 0; r < x_hat.rows(); ++r) {
          const double e = uniform(rng);
          x_hat.row(r) = e * b.frames.row(r) + (1.0 - e) * x_bar.row(r);
        }
        opt_d.zero_grad();
        const double gp = n.accumulate_penalty_gradient(x_hat, cfg.gp_weight);
        const double real = n.critic.forward(b.frames).mean();
        n.critic.backward(constant_column(x_hat.rows(), -1.0 / B));
        const double fake = n.critic.forward(x_bar).mean();
        n.critic.backward(constant_column(x_hat.rows(), 1.0 / B));
        const double adv_d = fake - real + gp;
        check(adv_d, "adv_d", epoch);
        opt_d.step();
        d_sum += adv_d;
        ++d_steps;
        continue;
      }

      opt_g.zero_grad();
      const LatentCode c = n.encode(b.frames, &rng);
      const Matrix x_bar = n.decode(c.sample, b.phi, b.f0);
      const double kl = gaussian_kl(c.mu, c.log_var);
      const double recon = reconstruction_error(x_bar, b.frames);
      check(kl, "kl", epoch);
      check(recon, "recon", epoch);
      if (adversarial) {
        const double fake = n.critic.forward(x_bar).mean();
        const Matrix d_adv = n.critic.backward(constant_column(x_bar.rows(), -cfg.lambda_adv / B));
        n.critic.zero_grad();
        n.generator_backward(c, b.frames, x_bar, 1.0, cfg.lambda_rec, &d_adv);
        check(-fake, "adv_g", epoch);
        g_sum += -fake;
        ++g_steps;
      } else {
        n.generator_backward(c, b.frames, x_bar, 1.0, cfg.lambda_rec, nullptr);
      }
      opt_g.step();
      kl_sum += kl * B;
      rec_sum += recon * B;
      gen_frames += B;
    }

    VcEpoch e;
    e.epoch = epoch;
    e.kl = gen_frames > 0 ? kl_sum / gen_frames : kNaN;
    e.recon = gen_frames > 0 ? rec_sum / gen_frames : kNaN;
    e.adv_g = g_steps > 0 ? g_sum / g_steps : kNaN;
    e.adv_d = d_steps > 0 ? d_sum / d_steps : kNaN;
    model.log_.push_back(e);
  }
  model.trained_ = true;
  return model;
}

}  // namespace deepest
