#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "blockprune/matrix.hpp"

namespace blockprune {

/// Boolean grid with the shape of a weight window; a set bit marks a weight
/// for removal.
class PruneMask {
 public:
  PruneMask() = default;
  PruneMask(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  bool test(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on = true) { bits_[i * cols_ + j] = on ? 1 : 0; }

  std::span<const std::uint8_t> row(std::size_t i) const { return {bits_.data() + i * cols_, cols_}; }
  std::size_t row_count(std::size_t i) const;
  std::size_t popcount() const;

  /// Copies `other` into this mask with its top-left corner at (`r0`, `c0`).
  void paste(const PruneMask& other, std::size_t r0, std::size_t c0);
  PruneMask slice_cols(std::size_t c0, std::size_t ncols) const;

  friend bool operator==(const PruneMask&, const PruneMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Strictly increasing column positions.
class IndexSet {
 public:
  IndexSet() = default;
  /// Throws ConfigError unless strictly increasing and below `bound`.
  IndexSet(std::vector<std::size_t> indices, std::size_t bound);

  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t operator[](std::size_t k) const { return indices_[k]; }
  std::span<const std::size_t> indices() const noexcept { return indices_; }
  auto begin() const noexcept { return indices_.begin(); }
  auto end() const noexcept { return indices_.end(); }

  friend bool operator==(const IndexSet&, const IndexSet&) = default;

 private:
  std::vector<std::size_t> indices_;
};

/// |W_ij| * norms_j for every entry.
using SaliencyGrid = DenseMatrix;

/// floor(fraction * cells), tolerant of binary round-off in `fraction`
/// (0.29 * 100 counts 29, not 28).
std::size_t floor_count(double fraction, std::size_t cells);
/// ceil(x) with the same tolerance.
std::size_t ceil_count(double x);

SaliencyGrid saliency(const DenseMatrix& w, std::span<const double> norms);

// Generic selectors over a score grid. Ties go to the lower row-major index.

/// `count` globally smallest scores.
PruneMask smallest_scores_mask(const DenseMatrix& scores, std::size_t count);
/// `per_row` smallest scores within every row.
PruneMask rowwise_smallest_mask(const DenseMatrix& scores, std::size_t per_row);
/// n smallest scores in every aligned group of m columns of every row. A
/// trailing group of width m' < m gets floor(n * m' / m).
PruneMask nm_scores_mask(const DenseMatrix& scores, std::size_t n, std::size_t m);

/// Mask of the r weights with the smallest |W_ij| * norms_j.
PruneMask psi_select(const DenseMatrix& w, std::span<const double> norms, std::size_t r);
/// Positions of the set entries of one mask row.
IndexSet phi_indices(std::span<const std::uint8_t> mask_row);
PruneMask nm_mask(const DenseMatrix& w, std::span<const double> norms, std::size_t n, std::size_t m);
/// floor(p * c * b) globally smallest |W_ij|.
PruneMask magnitude_mask(const DenseMatrix& w, double p);
/// floor(p * b) smallest saliencies per row.
PruneMask wanda_rowwise_mask(const DenseMatrix& w, std::span<const double> norms, double p);

void check_fraction(double p, const char* what);

}  // namespace blockprune
