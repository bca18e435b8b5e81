#pragma once

#include <cstddef>
#include <vector>

#include "blockprune/calibration.hpp"
#include "blockprune/outcome.hpp"

namespace blockprune {

/// Zeroes the floor(p*c*b) weights of smallest magnitude.
PruneOutcome prune_magnitude(const DenseMatrix& w, const CalibrationSet& cal, double p);

/// Zeroes the floor(p*b) weights of smallest |W_iq| * ||X_q|| in every row.
PruneOutcome prune_wanda(const DenseMatrix& w, const CalibrationSet& cal, double p);

struct ObsStep {
  std::vector<double> row;  // updated row k, exactly zero at q
  double saliency = 0.0;    // 0.5 * W_kq^2 / Hinv_qq
};

/// Optimal compensation for removing the single weight (k, q), with `w` spanning
/// the same columns as `hessian`.
ObsStep obs_single_step(const DenseMatrix& w, const Hessian& hessian, std::size_t k, std::size_t q);

/// State right after the first weight SparseGPT removes.
struct SparseGptTrace {
  bool recorded = false;
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<double> row_after;  // columns [col, b)
  double saliency = 0.0;
};

struct SparseGptOptions {
  SparsityTarget target = SparsityTarget::unstructured(0.5);
  std::size_t block_size = 128;
  /// 0 selects the block size; forced to m for n:m targets.
  std::size_t mask_block_size = 0;
  double lambda_rel = kDefaultDampingFraction;
  SparseGptTrace* trace = nullptr;
};

/// Sequential left-to-right column pruning with OBS compensation of the
/// not-yet-visited columns.
PruneOutcome prune_sparsegpt(const DenseMatrix& w, const CalibrationSet& cal, const SparseGptOptions& options);

/// Loss bookkeeping shared by the pruners: fills loss_before/loss_after.
void score_outcome(PruneOutcome& outcome, const DenseMatrix& original, const DenseMatrix& gram);

}  // namespace blockprune
