#include "blockprune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "blockprune/error.hpp"

namespace blockprune::oracle {

double loss_eval(const DenseMatrix& delta, const CalibrationSet& cal) {
  if (delta.cols() != cal.features()) {
    throw DimensionError("loss_eval: delta " + delta.shape() + " vs " + std::to_string(cal.features()) +
                         " features");
  }
  double total = 0.0;
  for (const auto& x : cal.samples()) {
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      for (std::size_t t = 0; t < x.cols(); ++t) {
        double y = 0.0;
        for (std::size_t k = 0; k < delta.cols(); ++k) y += delta(i, k) * x(k, t);
        total += y * y;
      }
    }
  }
  return total / static_cast<double>(cal.count());
}

namespace {

// sum_l X^l (X^l)^T, summed entry by entry.
DenseMatrix raw_gram(const CalibrationSet& cal) {
  const std::size_t b = cal.features();
  DenseMatrix g(b, b);
  for (const auto& x : cal.samples())
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t t = 0; t < x.cols(); ++t) g(i, j) += x(i, t) * x(j, t);
  return g;
}

// Gauss-Jordan elimination with full pivoting on a x = rhs.
std::vector<double> gauss_jordan(DenseMatrix a, std::vector<double> rhs) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> col_of(n);
  for (std::size_t k = 0; k < n; ++k) col_of[k] = k;
  double scale = 0.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pr = k, pc = k;
    double best = -1.0;
    for (std::size_t i = k; i < n; ++i)
      for (std::size_t j = k; j < n; ++j)
        if (std::abs(a(i, j)) > best) {
          best = std::abs(a(i, j));
          pr = i;
          pc = j;
        }
    if (!(best > 1e-14 * scale)) throw NumericalError("constrained_lsq: free block of the Gram matrix is singular");
    if (pr != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pr, j));
      std::swap(rhs[k], rhs[pr]);
    }
    if (pc != k) {
      for (std::size_t i = 0; i < n; ++i) std::swap(a(i, k), a(i, pc));
      std::swap(col_of[k], col_of[pc]);
    }
    const double p = a(k, k);
    for (std::size_t j = 0; j < n; ++j) a(k, j) /= p;
    rhs[k] /= p;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = a(i, k);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) a(i, j) -= f * a(k, j);
      rhs[i] -= f * rhs[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = 0; k < n; ++k) x[col_of[k]] = rhs[k];
  return x;
}

}  // namespace

std::vector<double> constrained_lsq(std::span<const double> w, const IndexSet& q, const CalibrationSet& cal) {
  const std::size_t b = cal.features();
  if (w.size() != b) throw DimensionError("constrained_lsq: row width does not match calibration features");
  std::vector<bool> fixed(b, false);
  for (std::size_t idx : q) {
    if (idx >= b) throw DimensionError("constrained_lsq: index outside the row");
    fixed[idx] = true;
  }

  std::vector<double> delta(b, 0.0);
  std::vector<std::size_t> free_idx;
  for (std::size_t j = 0; j < b; ++j) {
    if (fixed[j]) {
      delta[j] = -w[j];
    } else {
      free_idx.push_back(j);
    }
  }
  if (free_idx.empty()) return delta;

  // d/d(delta_F) ||delta X||^2 = 0  =>  G_FF delta_F = -G_Fq delta_q.
  const DenseMatrix g = raw_gram(cal);
  const std::size_t nf = free_idx.size();
  DenseMatrix gff(nf, nf);
  std::vector<double> rhs(nf, 0.0);
  for (std::size_t a = 0; a < nf; ++a) {
    for (std::size_t t = 0; t < nf; ++t) gff(a, t) = g(free_idx[a], free_idx[t]);
    for (std::size_t idx : q) rhs[a] -= g(free_idx[a], idx) * delta[idx];
  }
  const auto sol = gauss_jordan(std::move(gff), std::move(rhs));
  for (std::size_t a = 0; a < nf; ++a) delta[free_idx[a]] = sol[a];
  return delta;
}

SingleRemovalSearch exhaustive_single_weight(const DenseMatrix& w, const CalibrationSet& cal) {
  if (w.cols() != cal.features()) throw DimensionError("exhaustive_single_weight: shape mismatch");
  SingleRemovalSearch best;
  best.without_update.loss = INFINITY;
  best.with_update.loss = INFINITY;

  for (std::size_t k = 0; k < w.rows(); ++k) {
    for (std::size_t q = 0; q < w.cols(); ++q) {
      DenseMatrix zeroing(1, w.cols());
      zeroing(0, q) = -w(k, q);
      const double plain = loss_eval(zeroing, cal);
      if (plain < best.without_update.loss) best.without_update = {k, q, plain};

      const auto delta = constrained_lsq(w.row(k), IndexSet({q}, w.cols()), cal);
      const double compensated = loss_eval(DenseMatrix(1, w.cols(), delta), cal);
      if (compensated < best.with_update.loss) best.with_update = {k, q, compensated};
    }
  }
  return best;
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  k = std::min(k, n - k);
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

MaskSearch exhaustive_mask_search(const DenseMatrix& w, const CalibrationSet& cal, std::size_t r) {
  if (w.cols() != cal.features()) throw DimensionError("exhaustive_mask_search: shape mismatch");
  const std::size_t cells = w.size();
  if (r > cells) throw ConfigError("exhaustive_mask_search: r exceeds the number of weights");
  if (binomial(cells, r) > static_cast<double>(kMaxMaskCandidates)) {
    throw ConfigError("exhaustive_mask_search: C(" + std::to_string(cells) + ", " + std::to_string(r) +
                      ") candidate masks is beyond the enumeration limit");
  }

  MaskSearch best{PruneMask(w.rows(), w.cols()), INFINITY};
  // Lexicographic enumeration of r-subsets of flat positions.
  std::vector<std::size_t> pick(r);
  for (std::size_t k = 0; k < r; ++k) pick[k] = k;
  while (true) {
    PruneMask mask(w.rows(), w.cols());
    for (std::size_t f : pick) mask.set(f / w.cols(), f % w.cols());

    DenseMatrix delta(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const IndexSet q = phi_indices(mask.row(i));
      if (q.empty()) continue;
      const auto d = constrained_lsq(w.row(i), q, cal);
      std::copy(d.begin(), d.end(), delta.row(i).begin());
    }
    const double loss = loss_eval(delta, cal);
    if (loss < best.loss) best = {mask, loss};

    std::size_t k = r;
    while (k > 0 && pick[k - 1] == cells - r + (k - 1)) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t t = k; t < r; ++t) pick[t] = pick[t - 1] + 1;
  }
  return best;
}

}  // namespace blockprune::oracle
