#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "blockprune/calibration.hpp"
#include "blockprune/error.hpp"
#include "blockprune/oracle.hpp"
#include "blockprune/pipeline.hpp"
#include "blockprune/tensor_io.hpp"
#include "blockprune/thanos.hpp"

namespace py = pybind11;
using namespace blockprune;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array, got " + std::to_string(a.ndim()) + "-d");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return DenseMatrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const DenseMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// Either one (features, tokens) array, a (samples, features, tokens) array, or a list of 2-d arrays.
CalibrationSet to_calibration(const py::object& obj) {
  std::vector<DenseMatrix> samples;
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    for (const auto& item : obj) samples.push_back(to_matrix(Array::ensure(item)));
  } else {
    const Array a = Array::ensure(obj);
    if (!a) throw DataError("calibration must be an array or a list of arrays");
    if (a.ndim() == 2) {
      samples.push_back(to_matrix(a));
    } else if (a.ndim() == 3) {
      const auto n = static_cast<std::size_t>(a.shape(0)), r = static_cast<std::size_t>(a.shape(1)),
                 c = static_cast<std::size_t>(a.shape(2));
      for (std::size_t s = 0; s < n; ++s) {
        const double* p = a.data() + s * r * c;
        samples.emplace_back(r, c, std::vector<double>(p, p + r * c));
      }
    } else {
      throw DimensionError("calibration array must be 2-d or 3-d");
    }
  }
  return CalibrationSet(std::move(samples));
}

IndexSet to_indices(const std::vector<std::size_t>& q, std::size_t bound) {
  std::vector<std::size_t> sorted = q;
  std::sort(sorted.begin(), sorted.end());
  return IndexSet(std::move(sorted), bound);
}

py::array_t<bool> mask_array(const PruneMask& m) {
  py::array_t<bool> out({m.rows(), m.cols()});
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) *p++ = m.test(i, j);
  return out;
}

py::dict prune(const Array& weights, const py::object& calibration, const std::string& method, double sparsity,
               const std::string& pattern, std::size_t block_size, std::size_t mask_block_size,
               std::optional<double> alpha, double damping, const std::string& mask_from) {
  RunConfig cfg;
  cfg.method = parse_method(method);
  cfg.sparsity = sparsity;
  parse_pattern(pattern, cfg);
  cfg.block_size = block_size;
  cfg.mask_block_size = mask_block_size;
  if (alpha) cfg.alpha = *alpha;
  cfg.lambda_rel = damping;
  if (mask_from != "own" && mask_from != "wanda") throw ConfigError("mask_from must be 'own' or 'wanda'");
  cfg.inject_wanda_mask = mask_from == "wanda";

  const DenseMatrix w = to_matrix(weights);
  const CalibrationSet cal = to_calibration(calibration);
  PruneOutcome out;
  {
    py::gil_scoped_release release;
    out = prune_layer(w, cal, resolve_config(cfg));
  }
  py::dict d;
  d["pruned"] = to_array(out.pruned);
  d["mask"] = mask_array(out.mask);
  d["loss_before"] = out.loss_before;
  d["loss_after"] = out.loss_after;
  d["method"] = out.method;
  return d;
}

py::array read_array(const std::filesystem::path& path) {
  const Tensor t = read_tensor(path);
  std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
  Array out(shape);
  std::copy(t.values.begin(), t.values.end(), out.mutable_data());
  return std::move(out);
}

void write_array(const std::filesystem::path& path, const Array& a, const std::string& dtype) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("only 2-d and 3-d arrays can be written");
  if (dtype != "f32" && dtype != "f64") throw ConfigError("dtype must be 'f32' or 'f64'");
  Tensor t;
  for (py::ssize_t k = 0; k < a.ndim(); ++k) t.dims.push_back(static_cast<std::uint64_t>(a.shape(k)));
  t.dtype = dtype == "f32" ? DType::F32 : DType::F64;
  t.values.assign(a.data(), a.data() + a.size());
  write_tensor(path, t);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Block-wise post-training pruning of linear layers";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.attr("DEFAULT_DAMPING") = kDefaultDampingFraction;
  m.attr("DEFAULT_OUTLIER_FRACTION") = kDefaultOutlierFraction;

  m.def("prune", &prune, py::arg("weights"), py::arg("calibration"), py::arg("method") = "thanos",
        py::arg("sparsity") = 0.5, py::arg("pattern") = "unstructured", py::arg("block_size") = 0,
        py::arg("mask_block_size") = 0, py::arg("alpha") = py::none(), py::arg("damping") = kDefaultDampingFraction,
        py::arg("mask_from") = "own",
        "Prune one layer. Returns a dict with pruned, mask, loss_before, loss_after and method.");

  m.def(
      "hessian",
      [](const py::object& calibration, double damping) {
        const Hessian h = compute_hessian(to_calibration(calibration), damping);
        return py::make_tuple(to_array(h.h), to_array(h.hinv), h.lambda);
      },
      py::arg("calibration"), py::arg("damping") = kDefaultDampingFraction,
      "Damped Hessian, its inverse and the damping added to the diagonal.");

  m.def(
      "row_norms",
      [](const py::object& calibration) { return to_array(row_norms(to_calibration(calibration)).values); },
      py::arg("calibration"));

  m.def(
      "row_update",
      [](const Array& w, const std::vector<std::size_t>& indices, const Array& hinv) {
        if (w.ndim() != 1) throw DimensionError("row must be 1-d");
        const std::vector<double> row(w.data(), w.data() + w.size());
        const RowUpdate up = thanos_row_update(row, to_indices(indices, row.size()), to_matrix(hinv));
        return py::make_tuple(to_array(up.delta), up.saliency);
      },
      py::arg("row"), py::arg("indices"), py::arg("hinv"),
      "Change to a row that zeroes every listed column at minimum loss; returns (delta, loss).");

  m.def(
      "constrained_lsq",
      [](const Array& w, const std::vector<std::size_t>& indices, const py::object& calibration) {
        if (w.ndim() != 1) throw DimensionError("row must be 1-d");
        const std::vector<double> row(w.data(), w.data() + w.size());
        return to_array(oracle::constrained_lsq(row, to_indices(indices, row.size()), to_calibration(calibration)));
      },
      py::arg("row"), py::arg("indices"), py::arg("calibration"));

  m.def(
      "loss",
      [](const Array& delta, const py::object& calibration) {
        return oracle::loss_eval(to_matrix(delta), to_calibration(calibration));
      },
      py::arg("delta"), py::arg("calibration"), "Mean squared output change over the calibration samples.");

  m.def("read_tensor", &read_array, py::arg("path"));
  m.def("write_tensor", &write_array, py::arg("path"), py::arg("array"), py::arg("dtype") = "f64");
}
