#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepest/corpus.hpp"
#include "deepest/nn/layers.hpp"
#include "deepest/types.hpp"

// Stage II: encoder E (x -> z), conditional decoder G (z, phi, f0 -> x) and
// Wasserstein critic Y (x -> score) on unit-sum log spectral frames.
namespace deepest {

struct VcArch {
  int frame_dim = 513;
  int latent_dim = 128;
  int embedding_dim = 256;
  double slope = 0.2;  // leaky rectifier after every hidden layer

  std::vector<int> encoder_channels = {16, 32, 64, 128, 256};
  int encoder_kernel = 7;
  int encoder_stride = 3;
  std::vector<int> encoder_pads = {2, 2, 2, 3, 3};  // symmetric; widths 171, 57, 19, 7, 3

  // FC output is reshaped to (decoder_fc_channels, decoder_fc_width).
  int decoder_fc_channels = 81;
  int decoder_fc_width = 19;
  std::vector<int> decoder_channels = {32, 16, 8};
  std::vector<int> decoder_kernels = {9, 7, 7};
  int decoder_stride = 3;
  std::vector<int> decoder_crops = {3, 2, 2};  // symmetric; widths 57, 171, 513
  int output_kernel = 1025;                    // stride 1, same padding, one channel

  std::vector<int> critic_channels = {16, 32, 64};
  std::vector<int> critic_kernels = {7, 7, 115};
  int critic_stride = 3;
  std::vector<int> critic_pads = {2, 2, 56};  // widths 171, 57, 19

  int decoder_input_dim() const { return latent_dim + embedding_dim + 1; }
  nlohmann::ordered_json to_json() const;
  static VcArch from_json(const nlohmann::json& j);
};

struct VcTrainConfig {
  int epochs = 45;
  int vae_epochs = 15;  // phase 1 length
  int batch_size = 256;
  double learning_rate = 1e-5;
  double lambda_rec = 1.0;
  double lambda_adv = 0.01;
  int n_critic = 5;
  double gp_weight = 10.0;
  std::uint64_t seed = 1;

  nlohmann::ordered_json to_json() const;
  // Keys absent from `j` keep the values of `base`.
  static VcTrainConfig from_json(const nlohmann::json& j, VcTrainConfig base);
  static VcTrainConfig from_json(const nlohmann::json& j);
};

struct LatentCode {
  Matrix mu;       // B x latent
  Matrix log_var;  // B x latent
  Matrix sample;   // mu + exp(log_var / 2) * eps; equals mu at inference
  Matrix eps;      // the noise used, zero at inference
};

struct LossTerms {
  double kl = 0.0;
  double recon = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
};

struct VcEpoch {
  int epoch = 0;
  double kl = 0.0;
  double recon = 0.0;
  double adv_g = 0.0;  // NaN before the adversarial phase
  double adv_d = 0.0;
};

struct VcBatch {
  Matrix frames;  // B x 513 normalised log-SP
  Matrix phi;     // B x 256
  Vector f0;      // B, conditioning values in [0, 1]
};

// Frames with their utterance embedding and F0, ready for batching.
class VcTrainingData {
 public:
  void add_utterance(const std::string& id, Emotion emotion, const Matrix& log_sp, const Vector& f0_hz,
                     const Vector& phi);
  std::size_t frames() const { return frame_utt_.size(); }
  std::size_t utterances() const { return ids_.size(); }
  const std::vector<Emotion>& emotions() const { return emotions_; }
  // ln f0 range over voiced frames.
  std::pair<double, double> log_f0_range() const;
  VcBatch batch(const std::vector<std::size_t>& frame_indices, double log_f0_min,
                double log_f0_max) const;

 private:
  std::vector<std::string> ids_;
  std::vector<Emotion> emotions_;  // per utterance
  std::vector<Vector> phi_;
  std::vector<std::vector<float>> rows_;  // per frame
  std::vector<double> f0_;                // per frame, Hz
  std::vector<std::size_t> frame_utt_;
};

enum class GradientObjective { kKl, kRecon, kBoth };

class VcModel {
 public:
  VcModel();
  explicit VcModel(const VcArch& arch, std::uint64_t seed = 1);
  VcModel(VcModel&&) noexcept;
  VcModel& operator=(VcModel&&) noexcept;
  ~VcModel();

  const VcArch& arch() const { return arch_; }
  const VcTrainConfig& train_config() const { return train_config_; }
  const std::vector<VcEpoch>& training_log() const { return log_; }
  bool trained() const { return trained_; }
  // Emotions present in the training data, sorted.
  const std::vector<Emotion>& seen_emotions() const { return seen_emotions_; }

  // With `rng` the code is sampled (training); without it sample == mu.
  LatentCode encode(const Matrix& x, nn::Rng* rng = nullptr) const;
  Matrix decode(const Matrix& z, const Matrix& phi, const Vector& f0) const;
  Vector discriminate(const Matrix& x) const;
  LossTerms loss_terms(const VcBatch& batch, nn::Rng& rng) const;

  // ln f0 min-max scaled into [0, 1]; unvoiced frames map to 0.
  Vector f0_condition(const Vector& f0_hz) const;
  void set_f0_range(double log_min, double log_max);
  std::pair<double, double> f0_range() const { return {log_f0_min_, log_f0_max_}; }

  // Max relative error between the analytic gradient of the chosen objective
  // and central differences on `samples` randomly drawn encoder/decoder
  // parameters. The noise eps is drawn once from `seed` and held fixed.
  double gradient_check(const VcBatch& batch, GradientObjective objective, std::uint64_t seed,
                        int samples = 10, double step = 1e-4);

  // Same comparison for the critic's gradient-penalty term at fixed
  // interpolates `x_hat`, whose parameter gradient training obtains from a
  // finite-difference Hessian-vector product.
  double penalty_gradient_check(const Matrix& x_hat, std::uint64_t seed, int samples = 10,
                                double step = 1e-5);

  void save(const std::filesystem::path& dir) const;
  static VcModel load(const std::filesystem::path& dir);
  std::uint64_t checksum() const;
  std::size_t parameter_count() const;
  nlohmann::ordered_json architecture_json() const;

 private:
  friend VcModel train_vc(const VcTrainingData&, const VcTrainConfig&, const VcArch&);
  struct Net;

  VcArch arch_;
  VcTrainConfig train_config_;
  std::vector<VcEpoch> log_;
  std::vector<Emotion> seen_emotions_;
  double log_f0_min_ = 0.0;
  double log_f0_max_ = 1.0;
  bool trained_ = false;
  std::unique_ptr<Net> net_;
  mutable std::unique_ptr<std::mutex> lock_;
};

// Phase 1 (epochs 1..vae_epochs) minimises kl + lambda_rec * recon. Phase 2
// walks batches in groups of n_critic critic steps followed by one
// generator step on kl + lambda_rec * recon + lambda_adv * adv_g.
// Throws EmptyTrainSet and DivergedTraining.
VcModel train_vc(const VcTrainingData& data, const VcTrainConfig& config, const VcArch& arch = {});

// Closed-form KL(N(mu, exp(log_var)) || N(0, I)), averaged over rows.
double gaussian_kl(const Matrix& mu, const Matrix& log_var);

// Mean squared error over all entries.
double reconstruction_error(const Matrix& x_bar, const Matrix& x);

// Header line of training_log.csv, e.g. "# epochs=45 batch=256 lr=1e-05 seed=1".
std::string training_log_header(const VcTrainConfig& config);

}  // namespace deepest
