#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "blockprune/calibration.hpp"
#include "blockprune/masks.hpp"
#include "blockprune/matrix.hpp"
#include "blockprune/outcome.hpp"

namespace blockprune {

enum class Pattern { Unstructured, SemiStructured, Structured };

inline constexpr std::size_t kDefaultUnstructuredBlock = 128;
inline constexpr std::size_t kDefaultSemiStructuredBlock = 512;
inline constexpr double kDefaultOutlierFraction = 0.1;

struct ThanosConfig {
  Pattern pattern = Pattern::Unstructured;
  /// Target fraction of removed weights (unstructured and structured).
  double sparsity = 0.5;
  /// Group pattern for SemiStructured: n zeros in every m consecutive weights.
  std::size_t n = 2;
  std::size_t m = 4;
  /// Columns pruned per iteration; 0 picks the pattern default. Values above
  /// the layer width are clamped to it. Ignored by Structured.
  std::size_t block_size = 0;
  /// Fraction of rows kept intact (SemiStructured and Structured only).
  double alpha = kDefaultOutlierFraction;
  double lambda_rel = kDefaultDampingFraction;
  /// Rows whose constrained systems are solved as one padded batch.
  std::size_t row_chunk = 256;
  double singular_tolerance = 1e-13;
};

/// Block size actually used for a layer of width `cols`.
std::size_t effective_block_size(const ThanosConfig& cfg, std::size_t cols);

/// Constrained system for removing the weights at `q` from one row:
/// r holds the rows q of the inverse Hessian, rhat its columns q, u the weights.
struct RowUpdateSystem {
  DenseMatrix r;
  DenseMatrix rhat;
  std::vector<double> u;
};

RowUpdateSystem build_row_system(std::span<const double> w, const IndexSet& q, const DenseMatrix& hinv);

struct RowUpdate {
  std::vector<double> delta;
  /// Loss of the update, 0.5 * delta * H * delta^T.
  double saliency = 0.0;
};

/// Minimum-loss change of `w` that zeroes every position in `q` at once.
/// `hinv` is the inverse Hessian over the same columns as `w`.
RowUpdate thanos_row_update(std::span<const double> w, const IndexSet& q, const DenseMatrix& hinv,
                            double singular_tolerance = 1e-13);

/// Block-wise unstructured pruning driven by a global residual budget of
/// floor(p*c*b) weights.
PruneOutcome prune_thanos_unstructured(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg);

/// Block-wise pruning with a caller-fixed mask instead of the residual selection.
PruneOutcome prune_thanos_with_mask(const DenseMatrix& w, const CalibrationSet& cal, const PruneMask& mask,
                                    const ThanosConfig& cfg);

/// n:m pruning; the ceil(alpha*c) rows with the largest removal loss are left untouched.
PruneOutcome prune_thanos_nm(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg);

/// Removes ceil(p*b/(1-alpha)) whole columns from the non-outlier rows in one solve.
PruneOutcome prune_thanos_structured(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg);

/// Dispatches on cfg.pattern.
PruneOutcome prune_thanos(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg);

/// h_i = mean over samples of ||W_i X^l||^2.
std::vector<double> outlier_row_losses(const DenseMatrix& w, const CalibrationSet& cal);
/// v_j = (sum of W_ij^2 over the first c - outliers rows) * mean ||X_j||^2.
std::vector<double> column_losses(const DenseMatrix& w, const CalibrationSet& cal, std::size_t outliers);

std::size_t outlier_count(double alpha, std::size_t rows);
std::size_t structured_column_count(double p, double alpha, std::size_t cols);

}  // namespace blockprune
