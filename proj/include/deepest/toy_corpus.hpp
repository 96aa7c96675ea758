#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepest/corpus.hpp"

namespace deepest {

// Source-filter generator for small, fully controlled emotional corpora.
// Emotions differ in pitch level and contour, spectral tilt, breathiness,
// loudness and speaking rate; text ids fix the vowel sequence so clips with
// the same text id are parallel across emotions and speakers.
struct ToySpeaker {
  std::string id;
  std::string gender;
  double base_f0 = 120.0;
  double formant_scale = 1.0;
};

struct ToyCorpusOptions {
  std::vector<ToySpeaker> speakers = {{"0001", "male", 115.0, 1.0},
                                      {"0002", "female", 210.0, 1.17}};
  std::vector<Emotion> emotions = {Emotion::kNeutral, Emotion::kHappy, Emotion::kSad,
                                   Emotion::kAngry};
  int clips_per_emotion = 50;
  double clip_seconds = 0.4;  // at neutral speaking rate
  std::uint64_t seed = 1;
};

std::vector<double> toy_utterance(const ToySpeaker& speaker, Emotion emotion, int text_id,
                                  double seconds, std::uint64_t seed);

// Writes root/<speaker>/<Emotion>/<speaker>_<number:06>.wav, numbered across
// emotions (k * clips_per_emotion + text_id), plus speaker_info.txt and an
// unsplit manifest.json, and returns the ingested index.
CorpusIndex write_toy_corpus(const std::filesystem::path& root, const ToyCorpusOptions& options);

}  // namespace deepest
