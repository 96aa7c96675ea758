#include <doctest.h>

#include <algorithm>
#include <random>

#include "common.hpp"
#include "deepest/ser.hpp"
#include "deepest/toy_corpus.hpp"

using namespace deepest;
using testing::error_code;

namespace {

SerConfig tiny_config() {
  SerConfig c;
  c.mel.segment_frames = 16;
  c.conv_channels = {2, 2};
  c.attention_dim = 8;
  c.epochs = 2;
  c.batch_size = 4;
  c.learning_rate = 1e-3;
  return c;
}

std::vector<LabeledClip> toy_clips(int per_class) {
  const ToySpeaker spk{"0001", "male", 120.0, 1.0};
  std::vector<LabeledClip> out;
  for (Emotion e : {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad, Emotion::kAngry})
    for (int t = 1; t <= per_class; ++t) out.push_back({toy_utterance(spk, e, t, 0.2, 3), e});
  return out;
}

const SerModel& tiny_model() {
  static const SerModel model = train_ser(toy_clips(2), {}, tiny_config());
  return model;
}

}  // namespace

TEST_CASE("ser embedding width is 256 for any length and batch size") {
  const auto& m = tiny_model();
  CHECK(m.classes().size() == 4);
  for (double seconds : {0.05, 0.2, 0.7}) {
    const auto clip = toy_utterance({"x", "male", 150.0, 1.0}, Emotion::kHappy, 4, seconds, 9);
    CHECK(m.embed(clip).phi.size() == kEmbeddingDim);
  }
  const auto clips = toy_clips(2);
  for (int batch : {1, 7, 256}) {
    std::vector<std::vector<double>> w;
    for (int i = 0; i < batch; ++i) w.push_back(clips[static_cast<std::size_t>(i) % clips.size()].waveform);
    const Matrix phi = m.embed_batch(w);
    CHECK(phi.rows() == batch);
    CHECK(phi.cols() == kEmbeddingDim);
    CHECK(phi.allFinite());
  }
}

TEST_CASE("ser inference is deterministic and micro-batching does not change results") {
  const auto& m = tiny_model();
  const auto clips = toy_clips(3);
  const auto a = m.embed(clips[5].waveform).phi;
  const auto b = m.embed(clips[5].waveform).phi;
  CHECK(a == b);
  std::vector<std::vector<double>> w;
  for (const auto& c : clips) w.push_back(c.waveform);
  const Matrix batch = m.embed_batch(w);
  CHECK((batch.row(5).transpose() - a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ser class probabilities and attention weights are distributions") {
  const auto& m = tiny_model();
  for (const auto& c : toy_clips(1)) {
    const Vector p = m.classify(c.waveform);
    CHECK(p.size() == 4);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Vector alpha = m.attention(c.waveform);
    CHECK(alpha.size() == 4);  // 16 frames pooled twice
    CHECK(alpha.minCoeff() >= 0.0);
    CHECK(std::fabs(alpha.sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("mean embedding oracles") {
  const auto& m = tiny_model();
  const auto clips = toy_clips(8);
  std::vector<std::vector<double>> refs;
  for (std::size_t i = 0; i < 30; ++i) refs.push_back(clips[i].waveform);

  const auto one = mean_embedding(m, {refs[0]});
  CHECK(one.phi == m.embed(refs[0]).phi);
  CHECK(one.source == EmotionEmbedding::Source::kReferenceMean);

  const auto two = mean_embedding(m, {refs[0], refs[1]});
  const Vector mid = 0.5 * (m.embed(refs[0]).phi + m.embed(refs[1]).phi);
  CHECK((two.phi - mid).cwiseAbs().maxCoeff() < 1e-12);

  Vector sum = Vector::Zero(kEmbeddingDim);
  for (const auto& r : refs) sum += m.embed(r).phi;
  const auto thirty = mean_embedding(m, refs, Emotion::kHappy);
  CHECK((thirty.phi - sum / 30.0).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(thirty.emotion_hint == Emotion::kHappy);

  auto shuffled = refs;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(4));
  CHECK((mean_embedding(m, shuffled).phi - thirty.phi).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(error_code([&] { mean_embedding(m, {}); }) == "EmptyReferenceSet");
}

TEST_CASE("ser error contracts") {
  const SerModel untrained;
  const auto clip = toy_clips(1)[0].waveform;
  CHECK(error_code([&] { untrained.embed(clip); }) == "UntrainedModel");
  CHECK(error_code([&] { untrained.classify(clip); }) == "UntrainedModel");
  CHECK(error_code([&] { tiny_model().embed(std::vector<double>{}); }) == "EmptyWaveform");
  CHECK(error_code([] { train_ser({}, {}, tiny_config()); }) == "EmptyCorpus");
  std::vector<LabeledClip> one_class = {{std::vector<double>(3200, 0.1), Emotion::kSad},
                                        {std::vector<double>(3200, 0.2), Emotion::kSad}};
  CHECK(error_code([&] { train_ser(one_class, {}, tiny_config()); }) == "InsufficientClasses");
}

TEST_CASE("ser training is seeded and logs every epoch") {
  const auto clips = toy_clips(2);
  auto cfg = tiny_config();
  const auto a = train_ser(clips, {}, cfg);
  const auto b = train_ser(clips, {}, cfg);
  CHECK(a.checksum() == b.checksum());
  REQUIRE(a.history().size() == 2);
  CHECK(a.history()[0].loss == b.history()[0].loss);
  CHECK_FALSE(a.history()[0].validation_accuracy.has_value());
}

TEST_CASE("ser early stopping keeps the best validation parameters") {
  const auto clips = toy_clips(2);
  auto cfg = tiny_config();
  cfg.epochs = 6;
  cfg.patience = 1;
  const auto m = train_ser(clips, clips, cfg);
  REQUIRE(!m.history().empty());
  double best = 0.0;
  for (const auto& h : m.history()) best = std::max(best, *h.validation_accuracy);
  int hits = 0;
  for (const auto& c : clips) {
    Eigen::Index k;
    m.classify(c.waveform).maxCoeff(&k);
    hits += m.classes()[static_cast<std::size_t>(k)] == c.label;
  }
  CHECK(static_cast<double>(hits) / clips.size() == doctest::Approx(best));
}

TEST_CASE("ser checkpoint round trip") {
  testing::TempDir dir("ser_ckpt");
  const auto& m = tiny_model();
  m.save(dir.path());
  const auto back = SerModel::load(dir.path());
  CHECK(back.checksum() == m.checksum());
  CHECK(back.classes() == m.classes());
  const auto clip = toy_clips(1)[2].waveform;
  CHECK(back.embed(clip).phi == m.embed(clip).phi);
  CHECK(std::filesystem::exists(dir / "training_log.csv"));
  CHECK(error_code([&] { SerModel::load(dir / "missing"); }) == "MissingCheckpoint");
}
