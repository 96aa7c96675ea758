#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "deepest/corpus.hpp"
#include "deepest/vocoder.hpp"

namespace deepest {

// One file per utterance, all fields little-endian:
//   "DPFEAT01"                8 bytes magic
//   u32 id_length, id bytes   utterance id (UTF-8)
//   u32 frames (T)
//   u32 dims (513)
//   f64 frame_period_ms
//   u32 fft_size
//   f64[T]        f0
//   f64[T * dims] sp, row-major
//   f64[T * dims] ap, row-major
struct CachedFeatures {
  std::string utterance_id;
  FeatureSet features;
};

void write_feature_cache(const std::filesystem::path& path, const std::string& utterance_id,
                         const FeatureSet& features);
CachedFeatures read_feature_cache(const std::filesystem::path& path);

// <dir>/<utterance_id>.feat
std::filesystem::path feature_cache_path(const std::filesystem::path& dir,
                                         const std::string& utterance_id);

// Cached features of `u` when <cache_dir>/<id>.feat exists; otherwise the
// audio is analysed and, given a cache directory, the result is stored.
FeatureSet utterance_features(const Utterance& u,
                              const std::optional<std::filesystem::path>& cache_dir = std::nullopt);

}  // namespace deepest
