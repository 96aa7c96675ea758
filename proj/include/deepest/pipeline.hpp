#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deepest/convert.hpp"
#include "deepest/corpus.hpp"
#include "deepest/prosody.hpp"
#include "deepest/ser.hpp"
#include "deepest/vawgan.hpp"

// Glue between a split corpus and the three stages. Features go through the
// per-utterance cache when a cache directory is given.
namespace deepest {

using CacheDir = std::optional<std::filesystem::path>;

// Unit-sum log-SP and F0 of every utterance, each paired with its own SER
// embedding.
VcTrainingData vc_training_data(const std::vector<Utterance>& utterances, const SerModel& ser,
                                const CacheDir& cache = std::nullopt);

// Pooled log-F0 moments of the utterances matching (speaker, emotion).
// Throws NoVoicedFrames when none of them is voiced.
F0Statistics f0_statistics_for(const std::vector<Utterance>& utterances, const std::string& speaker,
                               Emotion emotion, const CacheDir& cache = std::nullopt);

struct ConversionPlan {
  Emotion target_emotion = Emotion::kHappy;
  Emotion source_emotion = Emotion::kNeutral;
  Split source_split = Split::kTest;
  Split reference_split = Split::kReference;
  Split statistics_split = Split::kTrain;
  std::optional<std::string> speaker;  // all speakers when unset
};

// One request per source utterance. Phi_t averages the speaker's reference
// utterances of the target emotion. Target F0 statistics come from the
// statistics split when the model was trained on the target emotion and
// from the reference audio otherwise.
std::vector<ConversionRequest> plan_conversions(const CorpusIndex& index, const ConversionPlan& plan,
                                                const VcModel& vc, const SerModel& ser,
                                                const CacheDir& cache = std::nullopt);

}  // namespace deepest
