#include "deepest/prosody.hpp"

#include <cmath>

#include "deepest/error.hpp"

namespace deepest {

F0Statistics f0_statistics(std::span<const Vector> tracks, std::string speaker_id,
                           std::optional<Emotion> emotion) {
  F0Statistics s;
  s.speaker_id = std::move(speaker_id);
  s.emotion = emotion;
  double sum = 0.0;
  for (const auto& f0 : tracks)
    for (Eigen::Index t = 0; t < f0.size(); ++t)
      if (f0[t] > 0.0) {
        sum += std::log(f0[t]);
        ++s.voiced_frames;
      }
  if (s.voiced_frames < 2)
    fail("NoVoicedFrames", "need at least two voiced frames, found " +
                               std::to_string(s.voiced_frames));
  s.mean_logf0 = sum / static_cast<double>(s.voiced_frames);
  double sq = 0.0;
  for (const auto& f0 : tracks)
    for (Eigen::Index t = 0; t < f0.size(); ++t)
      if (f0[t] > 0.0) {
        const double d = std::log(f0[t]) - s.mean_logf0;
        sq += d * d;
      }
  s.std_logf0 = std::sqrt(sq / static_cast<double>(s.voiced_frames));
  s.degenerate = s.std_logf0 < 1e-8;
  return s;
}

}  // namespace deepest
