#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "blockprune/matrix.hpp"

namespace blockprune {

/// Fraction of the mean Hessian diagonal added as damping when none is given.
inline constexpr double kDefaultDampingFraction = 0.01;

/// Layer-input activations: d samples, each features x tokens (b x a).
class CalibrationSet {
 public:
  /// Throws DataError when empty or when samples disagree on shape.
  explicit CalibrationSet(std::vector<DenseMatrix> samples);

  const std::vector<DenseMatrix>& samples() const noexcept { return samples_; }
  std::size_t count() const noexcept { return samples_.size(); }
  std::size_t features() const noexcept { return samples_.front().rows(); }
  std::size_t tokens() const noexcept { return samples_.front().cols(); }

 private:
  std::vector<DenseMatrix> samples_;
};

/// Damped Hessian of the trailing window [offset, b) together with its inverse.
struct Hessian {
  DenseMatrix h;     // damped
  DenseMatrix hinv;  // inverse of the damped h
  double lambda = 0.0;
  std::size_t offset = 0;
};

/// Per-feature input norms, aggregated over samples as sqrt(mean ||X_q||^2).
struct RowNorms {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> tail(std::size_t offset) const {
    return std::span<const double>(values).subspan(offset);
  }
};

/// Undamped (2/d) * sum_l X^l (X^l)^T.
DenseMatrix accumulate_gram(const CalibrationSet& cal);

/// Cuts the [offset, b) window out of an undamped Gram matrix, adds
/// lambda = lambda_rel * mean(window diagonal) to the diagonal and inverts.
/// Throws NotPositiveDefinite with a hint to raise the damping.
Hessian hessian_from_gram(const DenseMatrix& gram, std::size_t offset, double lambda_rel);

Hessian compute_hessian(const CalibrationSet& cal, double lambda_rel = kDefaultDampingFraction);
Hessian trailing_hessian(const CalibrationSet& cal, std::size_t offset,
                         double lambda_rel = kDefaultDampingFraction);

RowNorms row_norms(const CalibrationSet& cal);

/// Sum over rows of 0.5 * delta_i * gram * delta_i^T, which equals the mean
/// over samples of ||delta X^l||_F^2 when `gram` is undamped.
double reconstruction_loss(const DenseMatrix& delta, const DenseMatrix& gram);

}  // namespace blockprune
