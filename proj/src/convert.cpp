#include "deepest/convert.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "deepest/checksum.hpp"
#include "deepest/error.hpp"
#include "deepest/feature_cache.hpp"
#include "deepest/spectral.hpp"
#include "deepest/wav.hpp"

namespace deepest {
namespace {

constexpr double kDegenerateStd = 1e-8;

void check_request(const ConversionRequest& r) {
  if (r.vc_model == nullptr || !r.vc_model->trained())
    fail("UntrainedModel", "conversion needs a trained conversion model");
  if (r.ser_model == nullptr || !r.ser_model->trained())
    fail("UntrainedModel", "conversion needs a trained emotion model");
  if (r.reference_set.empty())
    fail("EmptyReferenceSet", "no reference utterances for " + to_string(r.target_emotion));
  for (const auto& u : r.reference_set)
    if (u.emotion != r.target_emotion)
      fail("InvalidRequest", "reference " + u.id + " is " + to_string(u.emotion) + ", expected " +
                                 to_string(r.target_emotion));
  const auto scope = [&](const F0Statistics& s, std::optional<Emotion> emotion, const char* which) {
    if (!s.speaker_id.empty() && s.speaker_id != r.source.speaker_id)
      fail("InvalidRequest", std::string(which) + " F0 statistics belong to speaker " + s.speaker_id);
    if (s.emotion && emotion && *s.emotion != *emotion)
      fail("InvalidRequest", std::string(which) + " F0 statistics describe " + to_string(*s.emotion));
  };
  scope(r.f0_stats_source, r.source.emotion, "source");
  scope(r.f0_stats_target, r.target_emotion, "target");
}

EmotionEmbedding reference_embedding(const ConversionRequest& r) {
  std::vector<std::vector<double>> refs;
  refs.reserve(r.reference_set.size());
  for (const auto& u : r.reference_set) refs.push_back(read_wav(u.audio_path).samples);
  return mean_embedding(*r.ser_model, refs, r.target_emotion);
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail("WriteFailed", "cannot write " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) fail("WriteFailed", "cannot write " + path.string());
}

}  // namespace

Vector convert_f0(const Vector& f0_hz, const F0Statistics& src, const F0Statistics& tgt) {
  if (!(src.std_logf0 > kDegenerateStd))
    fail("DegenerateSourceStats", "source log-F0 std " + std::to_string(src.std_logf0) + " is degenerate");
  const double ratio = tgt.std_logf0 / src.std_logf0;
  // Identical moments give the identity map; skip the exp/log round off.
  const bool identity = ratio == 1.0 && src.mean_logf0 == tgt.mean_logf0;
  Vector out = Vector::Zero(f0_hz.size());
  for (Eigen::Index t = 0; t < f0_hz.size(); ++t) {
    if (!(f0_hz[t] > 0.0)) continue;
    out[t] = identity ? f0_hz[t]
                      : std::exp((std::log(f0_hz[t]) - src.mean_logf0) * ratio + tgt.mean_logf0);
  }
  return out;
}

FeatureSet convert_features(const FeatureSet& source, const Vector& phi, const F0Statistics& src,
                            const F0Statistics& tgt, const VcModel& vc) {
  validate(source);
  const auto norm = sp_normalize(source.sp);
  const Matrix z = vc.encode(norm.log_sp).mu;
  const Vector f0 = convert_f0(source.f0, src, tgt);
  const Matrix phis = phi.transpose().replicate(source.frames(), 1);
  Matrix decoded = vc.decode(z, phis, vc.f0_condition(f0));
  // Back to unit-sum rows so that the source frame energy is reproduced exactly.
  for (Eigen::Index t = 0; t < decoded.rows(); ++t) {
    const double peak = decoded.row(t).maxCoeff();
    decoded.row(t).array() -= peak + std::log((decoded.row(t).array() - peak).exp().sum());
  }
  FeatureSet out = source;
  out.f0 = f0;
  out.sp = sp_denormalize({std::move(decoded), norm.energy});
  out.sp = out.sp.cwiseMax(std::numeric_limits<double>::min());
  validate(out);
  return out;
}

ConversionResult convert_utterance(const ConversionRequest& request) {
  check_request(request);
  return convert_utterance(request, reference_embedding(request));
}

ConversionResult convert_utterance(const ConversionRequest& request,
                                   const EmotionEmbedding& embedding) {
  check_request(request);
  const Wav wav = read_wav(request.source.audio_path);
  const FeatureSet source = analyze(wav.samples, wav.sample_rate);
  ConversionResult r;
  r.embedding = embedding;
  r.features = convert_features(source, embedding.phi, request.f0_stats_source,
                                request.f0_stats_target, *request.vc_model);
  r.waveform = synthesize(r.features);
  return r;
}

std::string conversion_stem(const std::string& utterance_id, Emotion target) {
  return utterance_id + "__to__" + to_string(target);
}

nlohmann::ordered_json to_json(const F0Statistics& s) {
  nlohmann::ordered_json j;
  j["speaker_id"] = s.speaker_id;
  j["emotion"] = s.emotion ? nlohmann::ordered_json(to_string(*s.emotion)) : nlohmann::ordered_json();
  j["mean_logf0"] = s.mean_logf0;
  j["std_logf0"] = s.std_logf0;
  j["voiced_frames"] = s.voiced_frames;
  j["degenerate"] = s.degenerate;
  return j;
}

F0Statistics f0_statistics_from_json(const nlohmann::json& j) {
  F0Statistics s;
  try {
    s.speaker_id = j.value("speaker_id", std::string());
    if (j.contains("emotion") && !j["emotion"].is_null())
      s.emotion = parse_emotion(j["emotion"].get<std::string>());
    s.mean_logf0 = j.at("mean_logf0").get<double>();
    s.std_logf0 = j.at("std_logf0").get<double>();
    s.voiced_frames = j.value("voiced_frames", 0L);
    s.degenerate = j.value("degenerate", false);
  } catch (const nlohmann::json::exception& e) {
    fail("InvalidConfig", std::string("F0 statistics: ") + e.what());
  }
  return s;
}

nlohmann::ordered_json ConversionManifest::to_json() const {
  nlohmann::ordered_json j;
  j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& o : outputs)
    j["outputs"].push_back({{"source_id", o.source_id},
                            {"target_emotion", to_string(o.target_emotion)},
                            {"wav", o.wav.filename().string()},
                            {"features", o.features.filename().string()},
                            {"sidecar", o.sidecar.filename().string()},
                            {"frames", o.frames},
                            {"waveform_checksum", o.waveform_checksum}});
  j["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : errors)
    j["errors"].push_back({{"source_id", e.source_id},
                           {"target_emotion", to_string(e.target_emotion)},
                           {"code", e.code},
                           {"message", e.message}});
  j["summary"] = {{"requested", outputs.size() + errors.size()},
                  {"converted", outputs.size()},
                  {"failed", errors.size()}};
  return j;
}

ConversionManifest batch_convert(const std::vector<ConversionRequest>& requests,
                                 const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ConversionManifest manifest;
  // Requests sharing a reference set and emotion model share phi_t.
  std::map<std::pair<const SerModel*, std::string>, EmotionEmbedding> embeddings;
  for (const auto& r : requests) {
    try {
      check_request(r);
      std::string key = to_string(r.target_emotion);
      for (const auto& u : r.reference_set) key += "\n" + u.id;
      auto it = embeddings.find({r.ser_model, key});
      if (it == embeddings.end())
        it = embeddings.emplace(std::pair{r.ser_model, key}, reference_embedding(r)).first;
      const auto result = convert_utterance(r, it->second);

      const std::string stem = conversion_stem(r.source.id, r.target_emotion);
      ConvertedFile f;
      f.source_id = r.source.id;
      f.target_emotion = r.target_emotion;
      f.wav = out_dir / (stem + ".wav");
      f.features = out_dir / (stem + ".feat");
      f.sidecar = out_dir / (stem + ".json");
      f.frames = result.features.frames();
      const auto bytes = encode_wav(result.waveform, kSampleRate);
      f.waveform_checksum = fnv1a(bytes.data(), bytes.size());
      write_bytes(f.wav, bytes);
      write_feature_cache(f.features, stem, result.features);

      nlohmann::ordered_json side;
      side["source_id"] = r.source.id;
      side["speaker_id"] = r.source.speaker_id;
      side["text_id"] = r.source.text_id;
      side["target_emotion"] = to_string(r.target_emotion);
      side["frames"] = f.frames;
      side["waveform_checksum"] = f.waveform_checksum;
      side["phi_checksum"] = checksum(result.embedding.phi);
      side["references"] = nlohmann::ordered_json::array();
      for (const auto& u : r.reference_set) side["references"].push_back(u.id);
      side["f0_stats"] = {{"source", to_json(r.f0_stats_source)},
                          {"target", to_json(r.f0_stats_target)},
                          {"target_from_references", r.target_stats_from_references}};
      side["models"] = {{"vc_checksum", r.vc_model->checksum()},
                        {"ser_checksum", r.ser_model->checksum()}};
      write_json(f.sidecar, side);
      manifest.outputs.push_back(std::move(f));
    } catch (const Error& e) {
      manifest.errors.push_back({r.source.id, r.target_emotion, e.code(), e.what()});
    } catch (const std::exception& e) {
      manifest.errors.push_back({r.source.id, r.target_emotion, "InternalError", e.what()});
    }
  }
  write_json(out_dir / "conversions.json", manifest.to_json());
  return manifest;
}

}  // namespace deepest
