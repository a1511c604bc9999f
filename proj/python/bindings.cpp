#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "darsvs/commands.hpp"
#include "darsvs/errors.hpp"
#include "darsvs/f0_codec.hpp"
#include "darsvs/metrics.hpp"
#include "darsvs/mlpg.hpp"
#include "darsvs/postprocess.hpp"

namespace py = pybind11;
using namespace darsvs;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

// Shape and strides are spelled out: the count-only constructor produced
// zero strides with the system pybind11.
template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
  return py::array_t<T>({static_cast<py::ssize_t>(v.size())}, {static_cast<py::ssize_t>(sizeof(T))}, v.data());
}

QuantizerConfig quantizer(int n_levels, double mel_low, double mel_high) {
  QuantizerConfig q{n_levels, mel_low, mel_high};
  q.validate();
  return q;
}

RunConfig run_config(const std::optional<fs::path>& path) { return path ? load_run_config(*path) : RunConfig{}; }

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["f0_rmse_natural"] = r.f0_rmse_natural;
  d["f0_rmse_note"] = r.f0_rmse_note;
  d["corr_natural"] = r.corr_natural;
  d["corr_note"] = r.corr_note;
  d["vuv_error"] = r.vuv_error;
  d["mcd"] = r.mcd;
  d["frames"] = r.n_frames_compared;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deep autoregressive singing-voice acoustic models";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("hz_to_mel", &hz_to_mel, py::arg("hz"));
  m.def("mel_to_hz", &mel_to_hz, py::arg("mel"));

  m.def(
      "quantize",
      [](const DoubleArray& f0_hz, int n_levels, double mel_low, double mel_high) {
        return to_array(darsvs::quantize(F0Contour::from_hz(to_vector(f0_hz)), quantizer(n_levels, mel_low, mel_high)));
      },
      py::arg("f0_hz"), py::arg("n_levels") = 255, py::arg("mel_low") = 106.0, py::arg("mel_high") = 831.0,
      "Class per frame: 0 for unvoiced (0 Hz), otherwise the mel bin in 1..n_levels.");
  m.def(
      "dequantize",
      [](const std::vector<int>& classes, int n_levels, double mel_low, double mel_high) {
        return to_array(dequantize_classes(classes, quantizer(n_levels, mel_low, mel_high)).f0_hz);
      },
      py::arg("classes"), py::arg("n_levels") = 255, py::arg("mel_low") = 106.0, py::arg("mel_high") = 831.0,
      "Bin-centre F0 in Hz per class, 0 for class 0.");

  m.def(
      "moving_average", [](const DoubleArray& x, int w) { return to_array(darsvs::moving_average(to_vector(x), w)); },
      py::arg("values"), py::arg("half_width"));
  m.def(
      "postprocess_f0",
      [](const DoubleArray& f0_hz, const DoubleArray& notes, int w) {
        return to_array(darsvs::postprocess_f0(F0Contour::from_hz(to_vector(f0_hz)), to_vector(notes), w).f0_hz);
      },
      py::arg("f0_hz"), py::arg("note_hz"), py::arg("half_width") = kDefaultPostprocessWindow,
      "Replaces the smoothed melody of each voiced run with the note contour.");

  m.def(
      "f0_rmse", [](const DoubleArray& p, const DoubleArray& r) {
        return darsvs::f0_rmse(F0Contour::from_hz(to_vector(p)), F0Contour::from_hz(to_vector(r)));
      },
      py::arg("pred_hz"), py::arg("ref_hz"));
  m.def(
      "f0_corr", [](const DoubleArray& p, const DoubleArray& r) {
        return darsvs::f0_corr(F0Contour::from_hz(to_vector(p)), F0Contour::from_hz(to_vector(r)));
      },
      py::arg("pred_hz"), py::arg("ref_hz"));
  m.def(
      "vuv_error", [](const DoubleArray& p, const DoubleArray& r) {
        return darsvs::vuv_error(F0Contour::from_hz(to_vector(p)), F0Contour::from_hz(to_vector(r)));
      },
      py::arg("pred_hz"), py::arg("ref_hz"));
  m.def(
      "mcd",
      [](const DoubleArray& p, const DoubleArray& r) {
        if (p.ndim() != 2 || r.ndim() != 2 || p.shape(1) != kSpecDim || r.shape(1) != kSpecDim || p.shape(0) != r.shape(0))
          throw DimensionError("mcd: expected two [T x 41] arrays");
        return darsvs::mcd(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                           std::span<const double>(r.data(), static_cast<std::size_t>(r.size())),
                           static_cast<int>(p.shape(0)));
      },
      py::arg("pred"), py::arg("ref"), "Mean mel-cepstral distortion in dB over [T x 41] frames.");

  m.def(
      "mlpg",
      [](const DoubleArray& s, const DoubleArray& d, const DoubleArray& d2, std::array<double, 3> var) {
        return to_array(darsvs::mlpg(to_vector(s), to_vector(d), to_vector(d2), var));
      },
      py::arg("static_mean"), py::arg("delta_mean"), py::arg("delta2_mean"), py::arg("variances"));

  m.def(
      "default_config", [] { return to_json(RunConfig{}).dump(2); }, "Default run configuration as JSON text.");

  m.def(
      "build_corpus",
      [](const fs::path& out_dir, const std::optional<fs::path>& config) {
        const auto c = cmd_build_corpus(run_config(config), out_dir);
        return py::dict(py::arg("train") = c.train, py::arg("validation") = c.validation, py::arg("test") = c.test);
      },
      py::arg("out_dir"), py::arg("config") = py::none());

  m.def(
      "train",
      [](const std::string& kind, const fs::path& dataset, const fs::path& checkpoint,
         const std::optional<fs::path>& config, const std::optional<fs::path>& resume) {
        TrainRequest req{parse_kind(kind), run_config(config), dataset, checkpoint, {}, resume};
        TrainResult res;
        {
          py::gil_scoped_release release;
          res = cmd_train(req);
        }
        py::list log;
        for (const auto& r : res.log)
          log.append(py::dict(py::arg("epoch") = r.epoch, py::arg("train_loss") = r.train_loss,
                              py::arg("valid_loss") = r.valid_loss, py::arg("learning_rate") = r.learning_rate,
                              py::arg("steps") = r.steps));
        return py::dict(py::arg("best_epoch") = res.best_epoch, py::arg("best_valid") = res.best_valid,
                        py::arg("log") = log);
      },
      py::arg("kind"), py::arg("dataset"), py::arg("checkpoint"), py::arg("config") = py::none(),
      py::arg("resume") = py::none());

  m.def(
      "synthesize",
      [](const fs::path& dataset, const fs::path& out_dir, const std::optional<fs::path>& f0,
         const std::optional<fs::path>& spectral, const std::optional<fs::path>& baseline, const std::string& split,
         bool postprocess, int window) {
        SynthesisRequest req{f0, spectral, baseline, dataset, parse_split(split), out_dir, postprocess, window};
        py::gil_scoped_release release;
        return cmd_synthesize(req);
      },
      py::arg("dataset"), py::arg("out_dir"), py::arg("f0") = py::none(), py::arg("spectral") = py::none(),
      py::arg("baseline") = py::none(), py::arg("split") = "test", py::arg("postprocess") = false,
      py::arg("window") = kDefaultPostprocessWindow);

  m.def(
      "evaluate",
      [](const fs::path& pred_dir, const fs::path& dataset, const std::string& split) {
        const auto ds = read_dataset(dataset);
        return report_dict(evaluate_predictions(pred_dir, ds, parse_split(split)).aggregate);
      },
      py::arg("pred_dir"), py::arg("dataset"), py::arg("split") = "test");
}
