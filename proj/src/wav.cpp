#include "deepest/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "deepest/error.hpp"

namespace deepest {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

struct Parsed {
  WavInfo info;
  std::size_t data_offset = 0;
  std::size_t data_bytes = 0;
};

Parsed parse(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  auto bad = [&](const std::string& why) -> Parsed {
    fail("UnreadableAudio", name + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    return bad("not a RIFF/WAVE file");

  Parsed out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::uint8_t* body = bytes.data() + pos + 8;
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || pos + 8 + size > bytes.size()) return bad("truncated fmt chunk");
      const std::uint16_t format = le16(body);
      if (format != 1 && format != 0xFFFE) return bad("not PCM");
      out.info.channels = le16(body + 2);
      out.info.sample_rate = static_cast<int>(le32(body + 4));
      out.info.bits_per_sample = le16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      if (!have_fmt) return bad("data chunk before fmt chunk");
      out.data_offset = pos + 8;
      out.data_bytes = std::min<std::size_t>(size, bytes.size() - out.data_offset);
      const int block = out.info.channels * out.info.bits_per_sample / 8;
      if (block <= 0) return bad("invalid block alignment");
      out.info.frames = out.data_bytes / static_cast<std::size_t>(block);
      return out;
    }
    pos += 8 + size + (size & 1u);
  }
  return bad("missing data chunk");
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("UnreadableAudio", path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

WavInfo probe_wav(const std::filesystem::path& path) {
  return parse(slurp(path), path.string()).info;
}

Wav read_wav(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const Parsed p = parse(bytes, path.string());
  if (p.info.bits_per_sample != 16)
    fail("UnreadableAudio", path.string() + ": expected 16-bit PCM, found " +
                                std::to_string(p.info.bits_per_sample) + "-bit");
  if (p.info.channels != 1)
    fail("UnreadableAudio", path.string() + ": expected mono, found " +
                                std::to_string(p.info.channels) + " channels");
  Wav wav;
  wav.sample_rate = p.info.sample_rate;
  wav.samples.resize(p.info.frames);
  const std::uint8_t* data = bytes.data() + p.data_offset;
  for (std::size_t i = 0; i < p.info.frames; ++i) {
    const auto v = static_cast<std::int16_t>(le16(data + 2 * i));
    wav.samples[i] = v / 32768.0;
  }
  return wav;
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate * 2));
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (double s : samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const long v = std::lround(clipped * 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate) {
  const auto bytes = encode_wav(samples, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("IoError", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace deepest
