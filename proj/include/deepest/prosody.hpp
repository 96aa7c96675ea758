#pragma once

#include <optional>
#include <span>
#include <string>

#include "deepest/corpus.hpp"
#include "deepest/types.hpp"

namespace deepest {

// Log-F0 moments over voiced frames, pooled across a set of utterances.
struct F0Statistics {
  double mean_logf0 = 0.0;  // nats
  double std_logf0 = 0.0;   // population convention
  long voiced_frames = 0;
  std::string speaker_id;
  std::optional<Emotion> emotion;
  bool degenerate = false;  // std_logf0 < 1e-8
};

// Throws NoVoicedFrames when fewer than two voiced frames are present.
F0Statistics f0_statistics(std::span<const Vector> f0_tracks, std::string speaker_id = {},
                           std::optional<Emotion> emotion = std::nullopt);

}  // namespace deepest
