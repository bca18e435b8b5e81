#include "blockprune/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blockprune/error.hpp"

namespace blockprune {

CalibrationSet::CalibrationSet(std::vector<DenseMatrix> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw DataError("calibration set needs at least one sample");
  const auto& first = samples_.front();
  if (first.rows() == 0 || first.cols() == 0) throw DataError("calibration samples are empty");
  for (std::size_t l = 1; l < samples_.size(); ++l) {
    if (samples_[l].rows() != first.rows() || samples_[l].cols() != first.cols()) {
      throw DataError("calibration sample " + std::to_string(l) + " is " + samples_[l].shape() +
                      ", expected " + first.shape());
    }
  }
}

DenseMatrix accumulate_gram(const CalibrationSet& cal) {
  const std::size_t b = cal.features();
  DenseMatrix g(b, b);
  for (const auto& x : cal.samples()) {
    for (std::size_t i = 0; i < b; ++i) {
      auto xi = x.row(i);
      for (std::size_t j = i; j < b; ++j) {
        auto xj = x.row(j);
        double s = 0.0;
        for (std::size_t k = 0; k < xi.size(); ++k) s += xi[k] * xj[k];
        g(i, j) += s;
      }
    }
  }
  const double scale = 2.0 / static_cast<double>(cal.count());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i; j < b; ++j) {
      g(i, j) *= scale;
      g(j, i) = g(i, j);
    }
  }
  return g;
}

Hessian hessian_from_gram(const DenseMatrix& gram, std::size_t offset, double lambda_rel) {
  if (gram.rows() != gram.cols()) throw DimensionError("gram matrix " + gram.shape() + " is not square");
  if (offset >= gram.rows()) {
    throw DimensionError("Hessian window offset " + std::to_string(offset) + " outside " + gram.shape());
  }
  if (!(lambda_rel >= 0.0)) throw ConfigError("damping fraction must be non-negative");

  const std::size_t n = gram.rows() - offset;
  Hessian out;
  out.offset = offset;
  out.h = gram.block(offset, offset, n, n);

  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = out.h(i, i);
  out.lambda = lambda_rel * order_independent_sum(diag) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out.h(i, i) += out.lambda;

  try {
    out.hinv = spd_inverse(out.h);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), std::string(e.what()) +
                                             "; the Hessian is degenerate, increase the damping fraction");
  }
  return out;
}

Hessian compute_hessian(const CalibrationSet& cal, double lambda_rel) {
  return hessian_from_gram(accumulate_gram(cal), 0, lambda_rel);
}

Hessian trailing_hessian(const CalibrationSet& cal, std::size_t offset, double lambda_rel) {
  if (offset >= cal.features()) {
    throw DimensionError("trailing window offset " + std::to_string(offset) + " outside " +
                         std::to_string(cal.features()) + " features");
  }
  return hessian_from_gram(accumulate_gram(cal), offset, lambda_rel);
}

RowNorms row_norms(const CalibrationSet& cal) {
  RowNorms out;
  out.values.assign(cal.features(), 0.0);
  for (const auto& x : cal.samples()) {
    for (std::size_t q = 0; q < x.rows(); ++q) {
      double s = 0.0;
      for (double v : x.row(q)) s += v * v;
      out.values[q] += s;
    }
  }
  const double d = static_cast<double>(cal.count());
  for (double& v : out.values) v = std::sqrt(v / d);
  return out;
}

double reconstruction_loss(const DenseMatrix& delta, const DenseMatrix& gram) {
  if (delta.cols() != gram.rows() || gram.rows() != gram.cols()) {
    throw DimensionError("reconstruction_loss: delta " + delta.shape() + " vs gram " + gram.shape());
  }
  double total = 0.0;
  const std::size_t b = gram.rows();
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    auto d = delta.row(i);
    double row = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (d[j] == 0.0) continue;
      double s = 0.0;
      auto gj = gram.row(j);
      for (std::size_t k = 0; k < b; ++k) s += gj[k] * d[k];
      row += d[j] * s;
    }
    total += std::max(0.0, 0.5 * row);
  }
  return total;
}

}  // namespace blockprune
