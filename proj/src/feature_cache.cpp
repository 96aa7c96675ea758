#include "deepest/feature_cache.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "deepest/error.hpp"
#include "deepest/wav.hpp"

namespace deepest {
namespace {

constexpr char kMagic[8] = {'D', 'P', 'F', 'E', 'A', 'T', '0', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    fail("CorruptCache", path.string() + ": truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::filesystem::path feature_cache_path(const std::filesystem::path& dir,
                                         const std::string& utterance_id) {
  return dir / (utterance_id + ".feat");
}

void write_feature_cache(const std::filesystem::path& path, const std::string& utterance_id,
                         const FeatureSet& f) {
  validate(f);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("IoError", "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(utterance_id.size()));
  out.write(utterance_id.data(), static_cast<std::streamsize>(utterance_id.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.frames()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.sp.cols()));
  put<double>(out, f.frame_period_ms);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(f.fft_size));
  for (int t = 0; t < f.frames(); ++t) put<double>(out, f.f0[t]);
  for (const Matrix* m : {&f.sp, &f.ap})
    for (Eigen::Index t = 0; t < m->rows(); ++t)
      for (Eigen::Index d = 0; d < m->cols(); ++d) put<double>(out, (*m)(t, d));
  if (!out) fail("IoError", "failed writing " + path.string());
}

CachedFeatures read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("MissingCache", "cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    fail("CorruptCache", path.string() + ": bad magic");
  CachedFeatures c;
  const auto id_length = get<std::uint32_t>(in, path);
  c.utterance_id.resize(id_length);
  if (!in.read(c.utterance_id.data(), id_length)) fail("CorruptCache", path.string() + ": truncated");
  const auto frames = get<std::uint32_t>(in, path);
  const auto dims = get<std::uint32_t>(in, path);
  c.features.frame_period_ms = get<double>(in, path);
  c.features.fft_size = static_cast<int>(get<std::uint32_t>(in, path));
  c.features.f0.resize(frames);
  for (std::uint32_t t = 0; t < frames; ++t) c.features.f0[t] = get<double>(in, path);
  for (Matrix* m : {&c.features.sp, &c.features.ap}) {
    m->resize(frames, dims);
    for (std::uint32_t t = 0; t < frames; ++t)
      for (std::uint32_t d = 0; d < dims; ++d) (*m)(t, d) = get<double>(in, path);
  }
  return c;
}

FeatureSet utterance_features(const Utterance& u,
                              const std::optional<std::filesystem::path>& cache_dir) {
  if (cache_dir) {
    const auto path = feature_cache_path(*cache_dir, u.id);
    if (std::filesystem::exists(path)) return read_feature_cache(path).features;
  }
  const Wav wav = read_wav(u.audio_path);
  FeatureSet f = analyze(wav.samples, wav.sample_rate);
  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    write_feature_cache(feature_cache_path(*cache_dir, u.id), u.id, f);
  }
  return f;
}

}  // namespace deepest
