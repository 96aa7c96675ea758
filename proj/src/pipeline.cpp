#include "deepest/pipeline.hpp"

#include <algorithm>

#include "deepest/error.hpp"
#include "deepest/feature_cache.hpp"
#include "deepest/spectral.hpp"
#include "deepest/wav.hpp"

namespace deepest {

VcTrainingData vc_training_data(const std::vector<Utterance>& utterances, const SerModel& ser,
                                const CacheDir& cache) {
  VcTrainingData data;
  for (const auto& u : utterances) {
    const FeatureSet f = utterance_features(u, cache);
    const Wav wav = read_wav(u.audio_path);
    data.add_utterance(u.id, u.emotion, sp_normalize(f.sp).log_sp, f.f0, ser.embed(wav.samples).phi);
  }
  return data;
}

F0Statistics f0_statistics_for(const std::vector<Utterance>& utterances, const std::string& speaker,
                               Emotion emotion, const CacheDir& cache) {
  std::vector<Vector> tracks;
  for (const auto& u : utterances)
    if (u.speaker_id == speaker && u.emotion == emotion) tracks.push_back(utterance_features(u, cache).f0);
  return f0_statistics(tracks, speaker, emotion);
}

std::vector<ConversionRequest> plan_conversions(const CorpusIndex& index, const ConversionPlan& plan,
                                                const VcModel& vc, const SerModel& ser,
                                                const CacheDir& cache) {
  const auto& seen = vc.seen_emotions();
  const bool seen_target =
      seen.empty() || std::find(seen.begin(), seen.end(), plan.target_emotion) != seen.end();
  std::vector<ConversionRequest> requests;
  for (const auto& speaker : index.speakers) {
    if (plan.speaker && *plan.speaker != speaker) continue;
    const auto sources = select(index, {speaker, plan.source_emotion, plan.source_split});
    if (sources.empty()) continue;
    const auto refs = select(index, {speaker, plan.target_emotion, plan.reference_split});
    const auto stats_pool = select(index, {speaker, std::nullopt, plan.statistics_split});

    ConversionRequest base;
    base.target_emotion = plan.target_emotion;
    base.reference_set = refs;
    base.vc_model = &vc;
    base.ser_model = &ser;
    base.f0_stats_source = f0_statistics_for(stats_pool, speaker, plan.source_emotion, cache);
    const bool pool_has_target = std::any_of(stats_pool.begin(), stats_pool.end(), [&](const Utterance& u) {
      return u.emotion == plan.target_emotion;
    });
    if (seen_target && pool_has_target) {
      base.f0_stats_target = f0_statistics_for(stats_pool, speaker, plan.target_emotion, cache);
    } else if (!refs.empty()) {
      base.f0_stats_target = f0_statistics_for(refs, speaker, plan.target_emotion, cache);
      base.target_stats_from_references = true;
    }
    for (const auto& s : sources) {
      ConversionRequest r = base;
      r.source = s;
      requests.push_back(std::move(r));
    }
  }
  return requests;
}

}  // namespace deepest
