#include "deepest/ser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "deepest/error.hpp"
#include "deepest/nn/optim.hpp"
#include "deepest/nn/recurrent.hpp"
#include "deepest/wav.hpp"

namespace deepest {
namespace {

constexpr std::size_t kInferenceBatch = 16;

nn::VolumeShape input_shape(const SerConfig& c) {
  return {1, 3, c.mel.segment_frames, c.mel.bands};
}

std::vector<std::string> emotion_names(const std::vector<Emotion>& classes) {
  std::vector<std::string> out;
  for (Emotion e : classes) out.push_back(to_string(e));
  return out;
}

}  // namespace

struct SerModel::Net {
  nn::Sequential front;  // volume -> phi
  nn::Sequential head;   // phi -> logits
  nn::AttentionPool* pool = nullptr;

  std::vector<nn::Param*> params() {
    auto out = front.params();
    for (auto* p : head.params()) out.push_back(p);
    return out;
  }
};

nlohmann::ordered_json SerConfig::to_json() const {
  nlohmann::ordered_json j;
  j["mel"] = {{"sample_rate", mel.sample_rate}, {"bands", mel.bands},
              {"window", mel.window},           {"hop", mel.hop},
              {"fft_size", mel.fft_size},       {"segment_frames", mel.segment_frames},
              {"delta_window", mel.delta_window}};
  j["conv_channels"] = conv_channels;
  j["lstm_hidden"] = lstm_hidden;
  j["attention_dim"] = attention_dim;
  j["learning_rate"] = learning_rate;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["patience"] = patience;
  j["seed"] = seed;
  return j;
}

SerConfig SerConfig::from_json(const nlohmann::json& j) {
  SerConfig c;
  try {
    if (j.contains("mel")) {
      const auto& m = j["mel"];
      c.mel.sample_rate = m.value("sample_rate", c.mel.sample_rate);
      c.mel.bands = m.value("bands", c.mel.bands);
      c.mel.window = m.value("window", c.mel.window);
      c.mel.hop = m.value("hop", c.mel.hop);
      c.mel.fft_size = m.value("fft_size", c.mel.fft_size);
      c.mel.segment_frames = m.value("segment_frames", c.mel.segment_frames);
      c.mel.delta_window = m.value("delta_window", c.mel.delta_window);
    }
    c.conv_channels = j.value("conv_channels", c.conv_channels);
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("bad SER config: ") + e.what());
  }
  if (c.conv_channels.empty() || c.lstm_hidden < 1 || c.attention_dim < 1 || c.batch_size < 1 ||
      c.epochs < 0)
    fail("InvalidConfig", "SER config has non-positive sizes");
  return c;
}

SerModel::SerModel() : lock_(std::make_unique<std::mutex>()) {}
SerModel::SerModel(SerModel&&) noexcept = default;
SerModel& SerModel::operator=(SerModel&&) noexcept = default;
SerModel::~SerModel() = default;

SerModel::SerModel(const SerConfig& config, std::vector<Emotion> classes)
    : config_(config),
      classes_(std::move(classes)),
      net_(std::make_unique<Net>()),
      lock_(std::make_unique<std::mutex>()) {
  nn::VolumeShape shape = input_shape(config_);
  for (int channels : config_.conv_channels) {
    auto& conv = net_->front.add<nn::Conv3d>(shape, channels);
    net_->front.add<nn::LeakyReLU>(conv.out_features(), 0.2);
    auto& pool = net_->front.add<nn::MaxPool3d>(conv.output_shape());
    shape = pool.output_shape();
  }
  if (shape.time < 1 || shape.freq < 1)
    fail("InvalidConfig", "mel segment too small for the pooling stack");
  auto& seq = net_->front.add<nn::VolumeToSequence>(shape);
  net_->front.add<nn::BiLstm>(seq.steps(), seq.step_features(), config_.lstm_hidden);
  net_->pool = &net_->front.add<nn::AttentionPool>(seq.steps(), config_.embedding_dim(),
                                                   config_.attention_dim);
  net_->head.add<nn::Linear>(config_.embedding_dim(), static_cast<int>(classes_.size()));
  net_->front.name_params("front");
  net_->head.name_params("head");
  nn::Rng rng(config_.seed);
  net_->front.reset(rng);
  net_->head.reset(rng);
}

void SerModel::require_trained() const {
  if (!trained_ || !net_) fail("UntrainedModel", "SER model has not been trained or loaded");
}

Matrix SerModel::volumes(const std::vector<std::vector<double>>& waveforms, std::size_t begin,
                         std::size_t end) const {
  const int plane = config_.mel.segment_frames * config_.mel.bands;
  Matrix x(static_cast<Eigen::Index>(end - begin), 3 * plane);
  for (std::size_t i = begin; i < end; ++i) {
    if (waveforms[i].empty()) fail("EmptyWaveform", "cannot embed an empty waveform");
    const MelVolume v = mel_with_deltas(waveforms[i], config_.mel);
    for (int c = 0; c < 3; ++c) {
      Eigen::Map<Matrix> dst(x.row(static_cast<Eigen::Index>(i - begin)).data() + c * plane,
                             config_.mel.segment_frames, config_.mel.bands);
      dst = ((v.channels[c].array() - feature_mean_[c]) / feature_std_[c]).matrix();
    }
  }
  return x;
}

Matrix SerModel::embed_batch(const std::vector<std::vector<double>>& waveforms) const {
  require_trained();
  Matrix out(static_cast<Eigen::Index>(waveforms.size()), config_.embedding_dim());
  std::lock_guard guard(*lock_);
  for (std::size_t b = 0; b < waveforms.size(); b += kInferenceBatch) {
    const std::size_t e = std::min(waveforms.size(), b + kInferenceBatch);
    out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
        net_->front.forward(volumes(waveforms, b, e));
  }
  return out;
}

Matrix SerModel::classify_batch(const std::vector<std::vector<double>>& waveforms) const {
  require_trained();
  Matrix out(static_cast<Eigen::Index>(waveforms.size()), static_cast<Eigen::Index>(classes_.size()));
  std::lock_guard guard(*lock_);
  for (std::size_t b = 0; b < waveforms.size(); b += kInferenceBatch) {
    const std::size_t e = std::min(waveforms.size(), b + kInferenceBatch);
    out.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)) =
        nn::softmax(net_->head.forward(net_->front.forward(volumes(waveforms, b, e))));
  }
  return out;
}

EmotionEmbedding SerModel::embed(std::span<const double> waveform) const {
  EmotionEmbedding e;
  e.phi = embed_batch({std::vector<double>(waveform.begin(), waveform.end())}).row(0).transpose();
  return e;
}

Vector SerModel::classify(std::span<const double> waveform) const {
  return classify_batch({std::vector<double>(waveform.begin(), waveform.end())}).row(0).transpose();
}

Vector SerModel::attention(std::span<const double> waveform) const {
  require_trained();
  std::lock_guard guard(*lock_);
  net_->front.forward(volumes({std::vector<double>(waveform.begin(), waveform.end())}, 0, 1));
  return net_->pool->weights().row(0).transpose();
}

std::uint64_t SerModel::checksum() const {
  return net_ ? nn::params_checksum(net_->params()) : 0;
}

std::size_t SerModel::parameter_count() const {
  return net_ ? nn::parameter_count(net_->params()) : 0;
}

std::vector<std::string> SerModel::describe() const {
  if (!net_) return {};
  auto out = net_->front.describe();
  for (auto& s : net_->head.describe()) out.push_back(s);
  return out;
}

void SerModel::save(const std::filesystem::path& dir) const {
  require_trained();
  std::filesystem::create_directories(dir);
  nn::save_params(dir / "params.bin", net_->params());
  nlohmann::ordered_json j;
  j["kind"] = "ser";
  j["classes"] = emotion_names(classes_);
  j["embedding_dim"] = config_.embedding_dim();
  j["config"] = config_.to_json();
  j["feature_mean"] = feature_mean_;
  j["feature_std"] = feature_std_;
  j["architecture"] = describe();
  j["parameter_count"] = parameter_count();
  j["checksum"] = checksum();
  std::ofstream out(dir / "config.json");
  if (!out) fail("IoError", "cannot write " + (dir / "config.json").string());
  out << j.dump(2) << '\n';

  std::ofstream log(dir / "training_log.csv");
  log << "epoch,loss,train_accuracy,validation_accuracy\n";
  for (const auto& h : history_) {
    log << h.epoch << ',' << h.loss << ',' << h.train_accuracy << ',';
    if (h.validation_accuracy) log << *h.validation_accuracy;
    log << '\n';
  }
}

SerModel SerModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) fail("MissingCheckpoint", "no SER checkpoint at " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("CorruptCheckpoint", (dir / "config.json").string() + ": " + e.what());
  }
  if (j.value("kind", "") != "ser") fail("CorruptCheckpoint", dir.string() + " is not an SER checkpoint");
  std::vector<Emotion> classes;
  for (const auto& name : j.at("classes")) classes.push_back(parse_emotion(name.get<std::string>()));
  SerModel m(SerConfig::from_json(j.at("config")), std::move(classes));
  m.feature_mean_ = j.at("feature_mean").get<std::array<double, 3>>();
  m.feature_std_ = j.at("feature_std").get<std::array<double, 3>>();
  nn::load_params(dir / "params.bin", m.net_->params());
  m.trained_ = true;
  return m;
}

SerModel train_ser(const std::vector<LabeledClip>& train, const std::vector<LabeledClip>& validation,
                   const SerConfig& config) {
  if (train.empty()) fail("EmptyCorpus", "no training clips for the SER");
  std::set<Emotion> labels;
  for (const auto& c : train) labels.insert(c.label);
  if (labels.size() < 2)
    fail("InsufficientClasses", "SER training needs at least two emotions, found " +
                                    std::to_string(labels.size()));
  const std::vector<Emotion> classes(labels.begin(), labels.end());
  auto label_index = [&](Emotion e) {
    const auto it = std::find(classes.begin(), classes.end(), e);
    if (it == classes.end()) fail("UnknownEmotion", "validation label " + to_string(e) + " unseen in training");
    return static_cast<int>(it - classes.begin());
  };

  SerModel model(config, classes);
  auto waveforms = [](const std::vector<LabeledClip>& clips) {
    std::vector<std::vector<double>> w;
    for (const auto& c : clips) w.push_back(c.waveform);
    return w;
  };
  const auto train_audio = waveforms(train);
  const auto val_audio = waveforms(validation);

  // Raw volumes first (identity standardisation), then channel statistics.
  Matrix x = model.volumes(train_audio, 0, train_audio.size());
  const Eigen::Index plane = x.cols() / 3;
  for (int c = 0; c < 3; ++c) {
    const auto block = x.middleCols(c * plane, plane).array();
    const double mean = block.mean();
    const double var = (block - mean).square().mean();
    model.feature_mean_[c] = mean;
    model.feature_std_[c] = std::sqrt(std::max(var, 1e-12));
    x.middleCols(c * plane, plane) =
        ((x.middleCols(c * plane, plane).array() - mean) / model.feature_std_[c]).matrix();
  }
  const Matrix xv = validation.empty() ? Matrix() : model.volumes(val_audio, 0, val_audio.size());
  std::vector<int> y, yv;
  for (const auto& c : train) y.push_back(label_index(c.label));
  for (const auto& c : validation) yv.push_back(label_index(c.label));

  auto params = model.net_->params();
  nn::Adam opt(params, config.learning_rate);
  nn::Rng rng(config.seed ^ 0x5e4);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  auto accuracy = [&](const Matrix& inputs, const std::vector<int>& truth) {
    int hits = 0;
    for (Eigen::Index b = 0; b < inputs.rows(); b += static_cast<Eigen::Index>(kInferenceBatch)) {
      const Eigen::Index n = std::min<Eigen::Index>(kInferenceBatch, inputs.rows() - b);
      const Matrix logits = model.net_->head.forward(model.net_->front.forward(inputs.middleRows(b, n)));
      for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index k;
        logits.row(i).maxCoeff(&k);
        hits += k == truth[static_cast<std::size_t>(b + i)];
      }
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
  };

  std::vector<nn::ParamBuffer> best;
  double best_val = -1.0;
  int stale = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int hits = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      Matrix xb(static_cast<Eigen::Index>(e - b), x.cols());
      std::vector<int> yb;
      for (std::size_t i = b; i < e; ++i) {
        xb.row(static_cast<Eigen::Index>(i - b)) = x.row(static_cast<Eigen::Index>(order[i]));
        yb.push_back(y[order[i]]);
      }
      opt.zero_grad();
      const Matrix phi = model.net_->front.forward(xb);
      const auto out = nn::softmax_cross_entropy(model.net_->head.forward(phi), yb);
      if (!std::isfinite(out.loss)) fail("DivergedTraining", "SER loss became non-finite");
      model.net_->front.backward(model.net_->head.backward(out.grad));
      opt.step();
      loss_sum += out.loss * static_cast<double>(e - b);
      for (std::size_t i = 0; i < yb.size(); ++i) {
        Eigen::Index k;
        out.probabilities.row(static_cast<Eigen::Index>(i)).maxCoeff(&k);
        hits += k == yb[i];
      }
    }
    SerEpoch h;
    h.epoch = epoch;
    h.loss = loss_sum / static_cast<double>(train.size());
    h.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    if (!validation.empty()) {
      h.validation_accuracy = accuracy(xv, yv);
      if (*h.validation_accuracy > best_val) {
        best_val = *h.validation_accuracy;
        best.clear();
        for (auto* p : params) best.push_back(p->value);
        stale = 0;
      } else {
        ++stale;
      }
    }
    model.history_.push_back(h);
    if (!validation.empty() && stale >= config.patience) break;
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  model.trained_ = true;
  return model;
}

EmotionEmbedding mean_embedding(const SerModel& model,
                                const std::vector<std::vector<double>>& references,
                                std::optional<Emotion> hint) {
  if (references.empty()) fail("EmptyReferenceSet", "reference set is empty");
  const Matrix phis = model.embed_batch(references);
  EmotionEmbedding e;
  e.phi = Vector::Zero(phis.cols());
  for (Eigen::Index r = 0; r < phis.rows(); ++r) e.phi += phis.row(r).transpose();
  e.phi /= static_cast<double>(phis.rows());
  e.source = EmotionEmbedding::Source::kReferenceMean;
  e.emotion_hint = hint;
  return e;
}

std::vector<LabeledClip> load_clips(const std::vector<Utterance>& utterances) {
  std::vector<LabeledClip> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances) {
    Wav w = read_wav(u.audio_path);
    if (w.sample_rate != kCorpusSampleRate)
      fail("SampleRateMismatch", u.audio_path.string() + ": found " + std::to_string(w.sample_rate) + " Hz");
    out.push_back({std::move(w.samples), u.emotion});
  }
  return out;
}

}  // namespace deepest
