#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "deepest/cli.hpp"
#include "deepest/convert.hpp"
#include "deepest/distortion.hpp"
#include "deepest/error.hpp"
#include "deepest/evaluate.hpp"
#include "deepest/listen.hpp"
#include "deepest/spectral.hpp"
#include "deepest/toy_corpus.hpp"
#include "deepest/vocoder.hpp"
#include "deepest/wav.hpp"

namespace py = pybind11;
using namespace deepest;

namespace {

FeatureSet features_from(Vector f0, Matrix sp, Matrix ap) {
  FeatureSet f;
  f.f0 = std::move(f0);
  f.sp = std::move(sp);
  f.ap = std::move(ap);
  return f;
}

MCEPTrack track_from(Matrix coeffs, double alpha) {
  MCEPTrack t;
  t.order = static_cast<int>(coeffs.cols()) - 1;
  t.alpha = alpha;
  t.coeffs = std::move(coeffs);
  return t;
}

F0Statistics stats(double mean, double sd) {
  F0Statistics s;
  s.mean_logf0 = mean;
  s.std_logf0 = sd;
  s.degenerate = sd < 1e-8;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Emotional voice conversion core: vocoder, distortion, prosody and evaluation helpers.";

  // Library failures surface as DeepestError with the stable code in `.code`.
  static PyObject* error_type = PyErr_NewException("deepest._core.DeepestError", PyExc_RuntimeError, nullptr);
  m.attr("DeepestError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.code() + ": " + e.what());
      exc.attr("code") = e.code();
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("MCD_SCALE") = kMcdScale;

  m.def(
      "analyze",
      [](const std::vector<double>& waveform, int sample_rate) {
        FeatureSet f;
        {
          py::gil_scoped_release release;
          f = analyze(waveform, sample_rate);
        }
        return py::make_tuple(f.f0, f.sp, f.ap);
      },
      py::arg("waveform"), py::arg("sample_rate") = kSampleRate,
      "Returns (f0, sp, ap) at a 5 ms frame period.");
  m.def(
      "synthesize",
      [](Vector f0, Matrix sp, Matrix ap) {
        const auto f = features_from(std::move(f0), std::move(sp), std::move(ap));
        py::gil_scoped_release release;
        return synthesize(f);
      },
      py::arg("f0"), py::arg("sp"), py::arg("ap"));

  m.def(
      "sp_normalize",
      [](const Matrix& sp) {
        auto n = sp_normalize(sp);
        return py::make_tuple(n.log_sp, n.energy);
      },
      py::arg("sp"), "Returns (log_sp, energy) with unit-sum rows.");
  m.def(
      "sp_denormalize", [](Matrix log_sp, Vector energy) { return sp_denormalize({std::move(log_sp), std::move(energy)}); },
      py::arg("log_sp"), py::arg("energy"));

  m.def(
      "mcep", [](const Matrix& sp, int order, double alpha) { return mcep(sp, order, alpha).coeffs; },
      py::arg("sp"), py::arg("order") = 24, py::arg("alpha") = 0.42);
  m.def(
      "mcd",
      [](Matrix a, Matrix b, bool aligned) {
        return mcd(track_from(std::move(a), 0.42), track_from(std::move(b), 0.42), aligned);
      },
      py::arg("a"), py::arg("b"), py::arg("aligned") = false,
      "Mean mel-cepstral distortion in dB; DTW-aligned unless aligned is set.");
  m.def(
      "dtw_align",
      [](Matrix a, Matrix b) {
        const auto al = dtw_align(track_from(std::move(a), 0.42), track_from(std::move(b), 0.42));
        return py::make_tuple(al.path, al.cost);
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "convert_f0",
      [](const Vector& f0, double src_mean, double src_std, double tgt_mean, double tgt_std) {
        return convert_f0(f0, stats(src_mean, src_std), stats(tgt_mean, tgt_std));
      },
      py::arg("f0"), py::arg("src_mean"), py::arg("src_std"), py::arg("tgt_mean"), py::arg("tgt_std"));

  m.def(
      "aggregate_mos",
      [](const std::vector<double>& ratings) {
        const auto s = aggregate_mos(ratings);
        return py::make_tuple(s.mean, s.half_width);
      },
      py::arg("ratings"), "Returns (mean, 95% t-interval half width).");
  m.def(
      "aggregate_preference",
      [](const std::vector<std::string>& choices, const std::vector<std::string>& options) {
        py::dict out;
        for (const auto& [option, pct] : aggregate_preference(choices, options).percent) out[py::str(option)] = pct;
        return out;
      },
      py::arg("choices"), py::arg("options") = std::vector<std::string>{});
  m.def(
      "cluster_purity",
      [](const Matrix& points, const std::vector<int>& labels, int k, std::uint64_t seed) {
        return cluster_purity(points, labels, k, seed);
      },
      py::arg("points"), py::arg("labels"), py::arg("k"), py::arg("seed") = 1,
      "Share of points in their k-means cluster's majority label.");

  m.def(
      "toy_utterance",
      [](const std::string& emotion, int text_id, double seconds, double base_f0, double formant_scale,
         std::uint64_t seed) {
        return toy_utterance({"0001", "", base_f0, formant_scale}, parse_emotion(emotion), text_id, seconds, seed);
      },
      py::arg("emotion"), py::arg("text_id") = 0, py::arg("seconds") = 0.4, py::arg("base_f0") = 120.0,
      py::arg("formant_scale") = 1.0, py::arg("seed") = 1);

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        auto w = read_wav(path);
        return py::make_tuple(w.samples, w.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate).");
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const std::vector<double>& samples, int sample_rate) {
        write_wav(path, samples, sample_rate);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = kSampleRate);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int status = 0;
        {
          py::gil_scoped_release release;
          status = run_cli(args, out, err);
        }
        return py::make_tuple(status, out.str(), err.str());
      },
      py::arg("args"), "Runs one command; returns (exit status, stdout, stderr).");
  m.def("cli_commands", &cli_commands);
}
