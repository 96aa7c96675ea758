#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace deepest {

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::size_t frames = 0;
};

struct Wav {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, scaled to [-1, 1)
};

// Reads only the RIFF header. Throws UnreadableAudio on malformed files.
WavInfo probe_wav(const std::filesystem::path& path);

// Decodes a 16-bit PCM mono file. Throws UnreadableAudio for anything else.
Wav read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate);

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate);

}  // namespace deepest
