#include "deepest/toy_corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "deepest/error.hpp"
#include "deepest/wav.hpp"

namespace fs = std::filesystem;

namespace deepest {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kRate = 16000;

struct Vowel {
  std::array<double, 3> formants;
  std::array<double, 3> bandwidths;
};

constexpr std::array<Vowel, 5> kVowels = {{
    {{730, 1090, 2440}, {130, 150, 220}},  // a
    {{530, 1840, 2480}, {110, 140, 210}},  // e
    {{270, 2290, 3010}, {100, 140, 230}},  // i
    {{570, 840, 2410}, {110, 130, 210}},   // o
    {{300, 870, 2240}, {100, 130, 200}},   // u
}};

// Fixed higher formants shared by every vowel.
constexpr std::array<double, 2> kUpperFormants = {3500.0, 4500.0};
constexpr std::array<double, 2> kUpperBandwidths = {250.0, 300.0};

struct Style {
  double pitch_scale;
  double contour;     // relative pitch excursion over the clip
  double arc;         // rise-fall depth
  double tilt;        // one-pole source low-pass coefficient
  double breathiness;
  double loudness;
  double rate;
  double jitter;
  double formant_shift;
};

Style style_of(Emotion e) {
  switch (e) {
    case Emotion::kNeutral: return {1.00, -0.10, 0.05, 0.95, 0.03, 0.45, 1.00, 0.002, 1.00};
    case Emotion::kHappy: return {1.35, 0.10, 0.25, 0.88, 0.04, 0.60, 1.15, 0.004, 1.06};
    case Emotion::kSad: return {0.82, -0.04, 0.02, 0.975, 0.18, 0.28, 0.80, 0.002, 0.96};
    case Emotion::kAngry: return {1.20, -0.30, 0.15, 0.80, 0.06, 0.85, 1.20, 0.010, 1.03};
    case Emotion::kSurprise: return {1.50, 0.35, 0.10, 0.88, 0.05, 0.65, 1.05, 0.004, 1.04};
  }
  return style_of(Emotion::kNeutral);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 29;
  return x;
}

// Second-order resonator with per-sample coefficients.
struct Resonator {
  double y1 = 0.0, y2 = 0.0;
  double step(double x, double freq, double bandwidth) {
    const double r = std::exp(-kPi * bandwidth / kRate);
    const double a1 = 2.0 * r * std::cos(2.0 * kPi * freq / kRate);
    const double a2 = -r * r;
    const double gain = 1.0 - a1 - a2;  // unit gain at DC
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<double> toy_utterance(const ToySpeaker& speaker, Emotion emotion, int text_id,
                                  double seconds, std::uint64_t seed) {
  const Style s = style_of(emotion);
  const int n = std::max(1, static_cast<int>(seconds / s.rate * kRate));

  // The vowel sequence depends on the text only.
  std::mt19937_64 text_rng(mix(0x7e47, static_cast<std::uint64_t>(text_id)));
  const int segments = 2 + static_cast<int>(text_rng() % 3);
  std::vector<int> vowels(static_cast<std::size_t>(segments));
  for (auto& v : vowels) v = static_cast<int>(text_rng() % kVowels.size());
  const bool fricative = text_rng() % 2 == 0;

  std::mt19937_64 rng(mix(mix(seed, std::hash<std::string>{}(speaker.id)),
                          mix(static_cast<std::uint64_t>(emotion), static_cast<std::uint64_t>(text_id))));
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> out(static_cast<std::size_t>(n));
  std::array<Resonator, 3> tract;
  std::array<Resonator, 2> upper;
  Resonator hiss;
  double source_lp = 0.0, phase = 0.0, previous_excitation = 0.0;
  const double segment_len = static_cast<double>(n) / segments;
  const double base = speaker.base_f0 * s.pitch_scale;

  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / n;  // 0..1 through the clip
    const double f0 = base * (1.0 + s.contour * (u - 0.5) + s.arc * std::sin(kPi * u)) *
                      (1.0 + s.jitter * gauss(rng));

    // Formants: glide between neighbouring vowels over the last 30% of a segment.
    const double pos = i / segment_len;
    const int seg = std::min(segments - 1, static_cast<int>(pos));
    const int next = std::min(segments - 1, seg + 1);
    const double within = pos - seg;
    const double glide = within > 0.7 ? (within - 0.7) / 0.3 : 0.0;
    std::array<double, 3> formant{}, bandwidth{};
    for (int k = 0; k < 3; ++k) {
      const auto& a = kVowels[static_cast<std::size_t>(vowels[seg])];
      const auto& b = kVowels[static_cast<std::size_t>(vowels[next])];
      formant[k] = ((1 - glide) * a.formants[k] + glide * b.formants[k]) * speaker.formant_scale *
                   (k == 1 ? s.formant_shift : 1.0);
      bandwidth[k] = (1 - glide) * a.bandwidths[k] + glide * b.bandwidths[k];
    }

    // Glottal source: one pulse per period, low-passed for spectral tilt.
    phase += f0 / kRate;
    double pulse = 0.0;
    if (phase >= 1.0) {
      phase -= 1.0;
      pulse = 1.0;
    }
    source_lp = s.tilt * source_lp + (1.0 - s.tilt) * pulse * 40.0;
    double excitation = source_lp + s.breathiness * 0.3 * gauss(rng);

    // A short fricative burst at the first segment boundary for some texts.
    double frication = 0.0;
    if (fricative && seg == 0 && within > 0.85) {
      excitation *= 0.1;
      frication = hiss.step(gauss(rng) * 0.25, 4500.0 * speaker.formant_scale, 1500.0);
    }

    // Lip radiation (first difference) keeps energy in the upper bands.
    double y = excitation - previous_excitation;
    previous_excitation = excitation;
    for (int k = 0; k < 3; ++k) y = tract[k].step(y, formant[k], bandwidth[k]);
    for (int k = 0; k < 2; ++k)
      y = upper[k].step(y, kUpperFormants[k] * speaker.formant_scale, kUpperBandwidths[k]);
    const double ramp = std::min({1.0, u * n / (0.005 * kRate), (1.0 - u) * n / (0.005 * kRate)});
    out[static_cast<std::size_t>(i)] = (y + frication) * ramp;
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::fabs(v));
  const double gain = peak > 0.0 ? s.loudness / peak : 0.0;
  for (double& v : out) v = v * gain + 1e-4 * gauss(rng);
  return out;
}

CorpusIndex write_toy_corpus(const fs::path& root, const ToyCorpusOptions& options) {
  fs::create_directories(root);
  fs::remove(root / "manifest.json");
  {
    std::ofstream info(root / "speaker_info.txt");
    for (const auto& sp : options.speakers) info << sp.id << ' ' << sp.gender << '\n';
  }
  for (const auto& speaker : options.speakers) {
    for (std::size_t k = 0; k < options.emotions.size(); ++k) {
      const Emotion e = options.emotions[k];
      std::string dir_name = to_string(e);
      dir_name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(dir_name[0])));
      const fs::path dir = root / speaker.id / dir_name;
      fs::create_directories(dir);
      for (int text = 1; text <= options.clips_per_emotion; ++text) {
        char name[64];
        // Numbered consecutively across emotions as in ESD; ingest folds the
        // number back to the text id.
        const int number = static_cast<int>(k) * options.clips_per_emotion + text;
        std::snprintf(name, sizeof(name), "%s_%06d.wav", speaker.id.c_str(), number);
        const auto audio = toy_utterance(speaker, e, text, options.clip_seconds, options.seed);
        write_wav(dir / name, audio, kRate);
      }
    }
  }
  IngestOptions ingest_options;
  ingest_options.parallel_size = options.clips_per_emotion;
  CorpusIndex index = ingest(root, ingest_options);
  // Later ingests read the folded text ids from here.
  write_manifest(root / "manifest.json", index);
  return index;
}

}  // namespace deepest
