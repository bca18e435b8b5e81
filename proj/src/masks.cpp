#include "blockprune/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "blockprune/error.hpp"

namespace blockprune {

std::size_t PruneMask::row_count(std::size_t i) const {
  auto r = row(i);
  return static_cast<std::size_t>(std::count(r.begin(), r.end(), std::uint8_t{1}));
}

std::size_t PruneMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void PruneMask::paste(const PruneMask& other, std::size_t r0, std::size_t c0) {
  if (r0 + other.rows() > rows_ || c0 + other.cols() > cols_) {
    throw DimensionError("mask paste out of bounds");
  }
  for (std::size_t i = 0; i < other.rows(); ++i)
    for (std::size_t j = 0; j < other.cols(); ++j) set(r0 + i, c0 + j, other.test(i, j));
}

PruneMask PruneMask::slice_cols(std::size_t c0, std::size_t ncols) const {
  if (c0 + ncols > cols_) throw DimensionError("mask column slice out of bounds");
  PruneMask out(rows_, ncols);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < ncols; ++j) out.set(i, j, test(i, c0 + j));
  return out;
}

IndexSet::IndexSet(std::vector<std::size_t> indices, std::size_t bound) : indices_(std::move(indices)) {
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    if (indices_[k] >= bound || (k > 0 && indices_[k] <= indices_[k - 1])) {
      throw ConfigError("index set must be strictly increasing and below " + std::to_string(bound));
    }
  }
}

namespace {

constexpr double kCountSlack = 1e-9;

}  // namespace

std::size_t floor_count(double fraction, std::size_t cells) {
  const double x = fraction * static_cast<double>(cells);
  return x <= 0.0 ? 0 : static_cast<std::size_t>(std::floor(x + kCountSlack));
}

std::size_t ceil_count(double x) {
  return x <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(x - kCountSlack));
}

void check_fraction(double p, const char* what) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1), got " + std::to_string(p));
  }
}

SaliencyGrid saliency(const DenseMatrix& w, std::span<const double> norms) {
  if (norms.size() != w.cols()) {
    throw DimensionError("saliency: " + std::to_string(norms.size()) + " norms for weights " + w.shape());
  }
  DenseMatrix s(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) s(i, j) = std::abs(w(i, j)) * norms[j];
  return s;
}

namespace {

// Marks the `count` smallest entries of `scores` among the flat positions
// listed in `candidates`; ties resolved by position.
void mark_smallest(const DenseMatrix& scores, std::vector<std::size_t>& candidates, std::size_t count,
                   PruneMask& mask) {
  if (count == 0) return;
  auto vals = scores.values();
  auto less = [&](std::size_t a, std::size_t b) {
    return vals[a] < vals[b] || (vals[a] == vals[b] && a < b);
  };
  if (count < candidates.size()) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(count),
                     candidates.end(), less);
  }
  const std::size_t cols = scores.cols();
  for (std::size_t k = 0; k < count; ++k) mask.set(candidates[k] / cols, candidates[k] % cols);
}

}  // namespace

PruneMask smallest_scores_mask(const DenseMatrix& scores, std::size_t count) {
  const std::size_t cells = scores.size();
  if (count > cells) {
    throw ConfigError("cannot select " + std::to_string(count) + " of " + std::to_string(cells) + " weights");
  }
  PruneMask mask(scores.rows(), scores.cols());
  std::vector<std::size_t> idx(cells);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  mark_smallest(scores, idx, count, mask);
  return mask;
}

PruneMask rowwise_smallest_mask(const DenseMatrix& scores, std::size_t per_row) {
  if (per_row > scores.cols()) {
    throw ConfigError("cannot select " + std::to_string(per_row) + " of " + std::to_string(scores.cols()) +
                      " weights per row");
  }
  PruneMask mask(scores.rows(), scores.cols());
  std::vector<std::size_t> idx(scores.cols());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::iota(idx.begin(), idx.end(), i * scores.cols());
    mark_smallest(scores, idx, per_row, mask);
  }
  return mask;
}

PruneMask nm_scores_mask(const DenseMatrix& scores, std::size_t n, std::size_t m) {
  if (n == 0 || n >= m) {
    throw ConfigError("n:m pattern needs 0 < n < m, got " + std::to_string(n) + ":" + std::to_string(m));
  }
  PruneMask mask(scores.rows(), scores.cols());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    for (std::size_t g = 0; g < scores.cols(); g += m) {
      const std::size_t width = std::min(m, scores.cols() - g);
      const std::size_t take = width == m ? n : (n * width) / m;
      idx.resize(width);
      std::iota(idx.begin(), idx.end(), i * scores.cols() + g);
      mark_smallest(scores, idx, take, mask);
    }
  }
  return mask;
}

PruneMask psi_select(const DenseMatrix& w, std::span<const double> norms, std::size_t r) {
  return smallest_scores_mask(saliency(w, norms), r);
}

IndexSet phi_indices(std::span<const std::uint8_t> mask_row) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < mask_row.size(); ++j)
    if (mask_row[j] != 0) out.push_back(j);
  return IndexSet(std::move(out), mask_row.size());
}

PruneMask nm_mask(const DenseMatrix& w, std::span<const double> norms, std::size_t n, std::size_t m) {
  return nm_scores_mask(saliency(w, norms), n, m);
}

PruneMask magnitude_mask(const DenseMatrix& w, double p) {
  check_fraction(p, "sparsity");
  DenseMatrix mags(w.rows(), w.cols());
  for (std::size_t k = 0; k < w.size(); ++k) mags.values()[k] = std::abs(w.values()[k]);
  return smallest_scores_mask(mags, floor_count(p, w.size()));
}

PruneMask wanda_rowwise_mask(const DenseMatrix& w, std::span<const double> norms, double p) {
  check_fraction(p, "sparsity");
  return rowwise_smallest_mask(saliency(w, norms), floor_count(p, w.cols()));
}

}  // namespace blockprune
