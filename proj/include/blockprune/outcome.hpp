#pragma once

#include <string>

#include "blockprune/masks.hpp"
#include "blockprune/matrix.hpp"

namespace blockprune {

/// Result of pruning one layer.
struct PruneOutcome {
  DenseMatrix pruned;
  PruneMask mask;
  /// Reconstruction loss of zeroing the masked weights with no compensation.
  double loss_before = 0.0;
  /// Reconstruction loss of `pruned` against the original weights.
  double loss_after = 0.0;
  std::string method;
};

/// Either an unstructured ratio p or an n:m group pattern.
struct SparsityTarget {
  enum class Kind { Ratio, NM };

  Kind kind = Kind::Ratio;
  double ratio = 0.0;
  std::size_t n = 0;
  std::size_t m = 0;

  static SparsityTarget unstructured(double p) { return {Kind::Ratio, p, 0, 0}; }
  static SparsityTarget nm(std::size_t n, std::size_t m) { return {Kind::NM, 0.0, n, m}; }
};

}  // namespace blockprune
