#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <tuple>
#include <vector>

#include "llpf/cli.hpp"
#include "llpf/io.hpp"
#include "llpf/llpf.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::span<const double> view(const Array& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

llpf::ModelGraph model(const std::string& name, std::tuple<int, int, int> shape, int classes) {
  const auto [c, h, w] = shape;
  return llpf::make_model(name, {c, h, w}, classes);
}

}  // namespace

PYBIND11_MODULE(llpf, m) {
  m.doc() = "Low-loss path finding between neural network modes";

  py::register_exception<llpf::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<llpf::ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def(
      "layer_stats",
      [](const Array& values) {
        const auto s = llpf::layer_stats<double>(view(values));
        return py::make_tuple(s.mean, s.variance);
      },
      py::arg("values"), "Mean and population variance.");

  m.def(
      "variance_correction",
      [](const Array& values, double target) {
        const auto out = llpf::variance_correction<double>(view(values), target);
        Array result(values.request().shape);
        std::copy(out.begin(), out.end(), result.mutable_data());
        return result;
      },
      py::arg("values"), py::arg("target"),
      "Rescale about the mean so the population variance equals target.");

  m.def(
      "radial_norm_sq", [](const Array& values) { return llpf::radial_norm_sq<double>(view(values)); },
      py::arg("values"));

  m.def(
      "arc_length",
      [](const Array& p0, const Array& d) {
        if (p0.size() != d.size()) throw llpf::ValidationError("arc_length: size mismatch");
        return llpf::arc_length<double>(view(p0), view(d));
      },
      py::arg("p0"), py::arg("d"));

  m.def(
      "rolling_average",
      [](const std::vector<double>& series, std::size_t window) {
        return llpf::rolling_average(series, window);
      },
      py::arg("series"), py::arg("window"));

  m.def("model_names", &llpf::model_names);

  m.def(
      "fdf_phase_plan",
      [](const std::string& name, std::tuple<int, int, int> shape, int classes) {
        const auto g = model(name, shape, classes);
        std::vector<std::pair<std::string, std::vector<std::string>>> out;
        for (const auto& ph : llpf::fdf_phase_plan(g, 1, {0, 0, 1}, {}).phases) {
          out.emplace_back(ph.name, ph.layers);
        }
        return out;
      },
      py::arg("model"), py::arg("input_shape"), py::arg("classes"),
      "FDF phases as (name, cumulative layers) pairs.");

  m.def(
      "load_checkpoint",
      [](const std::string& name, std::tuple<int, int, int> shape, int classes,
         const std::filesystem::path& path) {
        const auto g = model(name, shape, classes);
        const auto state = llpf::load_checkpoint<double>(g, path);
        py::dict out;
        for (const auto& s : g.param_layout()->slices()) {
          const auto v = state.params.slice(s.key());
          Array a(static_cast<py::ssize_t>(v.size()));
          std::copy(v.begin(), v.end(), a.mutable_data());
          out[py::str(s.key())] = a;
        }
        return out;
      },
      py::arg("model"), py::arg("input_shape"), py::arg("classes"), py::arg("path"),
      "Parameter slices of a checkpoint keyed by '<layer>.<kind>'.");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "llpf");
        std::vector<char*> argv;
        for (auto& s : args) argv.push_back(s.data());
        py::gil_scoped_release release;
        return llpf::cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run a command-line invocation in-process; returns the exit code.");
}
