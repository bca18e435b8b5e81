#pragma once

// Brute-force references for checking the pruners at toy scale. Nothing here
// shares a code path with the production solvers: losses are evaluated by
// direct multiplication and constrained problems are solved by eliminating the
// fixed coordinates.

#include <cstddef>
#include <span>
#include <vector>

#include "blockprune/calibration.hpp"
#include "blockprune/masks.hpp"
#include "blockprune/matrix.hpp"

namespace blockprune::oracle {

/// Mean over samples of ||delta X^l||_F^2, by explicit products.
double loss_eval(const DenseMatrix& delta, const CalibrationSet& cal);

/// Minimizer of ||delta X||^2 subject to delta[q_j] = -w[q_j]. The free
/// coordinates solve the normal equations of the remaining block.
std::vector<double> constrained_lsq(std::span<const double> w, const IndexSet& q, const CalibrationSet& cal);

struct SingleRemoval {
  std::size_t row = 0;
  std::size_t col = 0;
  double loss = 0.0;
};

struct SingleRemovalSearch {
  SingleRemoval without_update;
  SingleRemoval with_update;
};

/// Tries every single weight; ties keep the lowest row-major position.
SingleRemovalSearch exhaustive_single_weight(const DenseMatrix& w, const CalibrationSet& cal);

struct MaskSearch {
  PruneMask mask;
  double loss = 0.0;
};

inline constexpr std::size_t kMaxMaskCandidates = 20000;

/// Best popcount-r mask with optimal per-row compensation. Throws ConfigError
/// when C(c*b, r) exceeds kMaxMaskCandidates.
MaskSearch exhaustive_mask_search(const DenseMatrix& w, const CalibrationSet& cal, std::size_t r);

}  // namespace blockprune::oracle
