#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "deepest/corpus.hpp"
#include "deepest/prosody.hpp"
#include "deepest/ser.hpp"
#include "deepest/vawgan.hpp"
#include "deepest/vocoder.hpp"

// Stage III: neutral source -> target emotional style, x_hat = G(z, phi_t, f0_hat).
namespace deepest {

struct ConversionRequest {
  Utterance source;  // neutral
  Emotion target_emotion = Emotion::kHappy;
  std::vector<Utterance> reference_set;  // all labelled target_emotion
  const VcModel* vc_model = nullptr;
  const SerModel* ser_model = nullptr;
  F0Statistics f0_stats_source;  // (source speaker, neutral)
  F0Statistics f0_stats_target;  // (source speaker, target emotion)
  // Set when the target statistics come from the reference audio rather
  // than the training split (emotions the conversion model never saw).
  bool target_stats_from_references = false;
};

struct ConversionResult {
  std::vector<double> waveform;
  FeatureSet features;  // converted SP and F0, source AP
  EmotionEmbedding embedding;
};

// Log-Gaussian moment matching on voiced frames; unvoiced frames stay 0.
// Throws DegenerateSourceStats when src.std_logf0 <= 1e-8.
Vector convert_f0(const Vector& f0_hz, const F0Statistics& src, const F0Statistics& tgt);

// Converts analysed source features with a fixed target embedding. Frame
// energy and aperiodicity are taken from the source.
FeatureSet convert_features(const FeatureSet& source, const Vector& phi, const F0Statistics& src,
                            const F0Statistics& tgt, const VcModel& vc);

// Throws UntrainedModel, EmptyReferenceSet, DegenerateSourceStats and
// InvalidRequest (reference emotion or statistics scope mismatch).
ConversionResult convert_utterance(const ConversionRequest& request);
// Same, with phi_t already computed from request.reference_set.
ConversionResult convert_utterance(const ConversionRequest& request,
                                   const EmotionEmbedding& embedding);

// "<utt_id>__to__<emotion>"
std::string conversion_stem(const std::string& utterance_id, Emotion target);

struct ConvertedFile {
  std::string source_id;
  Emotion target_emotion = Emotion::kHappy;
  std::filesystem::path wav;
  std::filesystem::path features;
  std::filesystem::path sidecar;
  int frames = 0;
  std::uint64_t waveform_checksum = 0;  // FNV-1a of the written WAV bytes
};

struct ConversionFailure {
  std::string source_id;
  Emotion target_emotion = Emotion::kHappy;
  std::string code;
  std::string message;
};

struct ConversionManifest {
  std::vector<ConvertedFile> outputs;
  std::vector<ConversionFailure> errors;
  nlohmann::ordered_json to_json() const;
};

// Writes <stem>.wav, <stem>.feat and <stem>.json per request plus
// <out_dir>/conversions.json. A failing request is recorded and skipped.
ConversionManifest batch_convert(const std::vector<ConversionRequest>& requests,
                                 const std::filesystem::path& out_dir);

nlohmann::ordered_json to_json(const F0Statistics& s);
F0Statistics f0_statistics_from_json(const nlohmann::json& j);

}  // namespace deepest
