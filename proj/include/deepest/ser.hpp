#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "deepest/corpus.hpp"
#include "deepest/nn/layers.hpp"
#include "deepest/spectral.hpp"

// Stage I emotion descriptor: 3-D CNN over the (static, delta, delta-delta)
// mel volume, a bidirectional LSTM over time, additive attention pooling and
// a linear classifier. The attention output is the embedding phi.
namespace deepest {

inline constexpr int kEmbeddingDim = 256;

struct SerConfig {
  MelOptions mel;
  std::vector<int> conv_channels = {8, 16};
  int lstm_hidden = 128;  // phi width is 2 * lstm_hidden
  int attention_dim = 128;
  double learning_rate = 1e-4;
  int epochs = 50;
  int batch_size = 16;
  int patience = 10;  // epochs without validation gain before stopping
  std::uint64_t seed = 1;

  int embedding_dim() const { return 2 * lstm_hidden; }
  nlohmann::ordered_json to_json() const;
  static SerConfig from_json(const nlohmann::json& j);
};

struct EmotionEmbedding {
  enum class Source { kSingleUtterance, kReferenceMean };
  Vector phi;
  Source source = Source::kSingleUtterance;
  std::optional<Emotion> emotion_hint;
};

struct LabeledClip {
  std::vector<double> waveform;  // 16 kHz
  Emotion label = Emotion::kNeutral;
};

struct SerEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
};

class SerModel {
 public:
  SerModel();  // untrained placeholder; every query throws UntrainedModel
  SerModel(const SerConfig& config, std::vector<Emotion> classes);
  SerModel(SerModel&&) noexcept;
  SerModel& operator=(SerModel&&) noexcept;
  ~SerModel();

  bool trained() const { return trained_; }
  const SerConfig& config() const { return config_; }
  const std::vector<Emotion>& classes() const { return classes_; }
  const std::vector<SerEpoch>& history() const { return history_; }

  EmotionEmbedding embed(std::span<const double> waveform) const;
  // One row per waveform, evaluated in micro-batches.
  Matrix embed_batch(const std::vector<std::vector<double>>& waveforms) const;
  // Probabilities in classes() order.
  Vector classify(std::span<const double> waveform) const;
  Matrix classify_batch(const std::vector<std::vector<double>>& waveforms) const;
  // Attention weights over the pooled time steps, for inspection.
  Vector attention(std::span<const double> waveform) const;

  // <dir>/params.bin, <dir>/config.json, <dir>/training_log.csv
  void save(const std::filesystem::path& dir) const;
  static SerModel load(const std::filesystem::path& dir);

  std::uint64_t checksum() const;
  std::size_t parameter_count() const;
  std::vector<std::string> describe() const;

 private:
  friend SerModel train_ser(const std::vector<LabeledClip>&, const std::vector<LabeledClip>&,
                            const SerConfig&);
  struct Net;

  void require_trained() const;
  Matrix volumes(const std::vector<std::vector<double>>& waveforms, std::size_t begin,
                 std::size_t end) const;

  SerConfig config_;
  std::vector<Emotion> classes_;
  std::vector<SerEpoch> history_;
  // Per mel channel standardisation measured on the training clips.
  std::array<double, 3> feature_mean_{0.0, 0.0, 0.0};
  std::array<double, 3> feature_std_{1.0, 1.0, 1.0};
  bool trained_ = false;
  std::unique_ptr<Net> net_;
  // Layers cache activations during forward(), so inference is serialised.
  mutable std::unique_ptr<std::mutex> lock_;
};

// Cross-entropy training on utterance labels with Adam. `validation` may be
// empty; when present the parameters with the best validation accuracy are
// kept and training stops after `patience` epochs without improvement.
// Throws EmptyCorpus or InsufficientClasses (fewer than two labels).
SerModel train_ser(const std::vector<LabeledClip>& train, const std::vector<LabeledClip>& validation,
                   const SerConfig& config);

// Arithmetic mean of per-utterance embeddings. Throws EmptyReferenceSet.
EmotionEmbedding mean_embedding(const SerModel& model,
                                const std::vector<std::vector<double>>& references,
                                std::optional<Emotion> hint = std::nullopt);

// Reads the audio of each utterance (16 kHz mono).
std::vector<LabeledClip> load_clips(const std::vector<Utterance>& utterances);

}  // namespace deepest
