#include "blockprune/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "blockprune/error.hpp"
#include "blockprune/parallel.hpp"

namespace blockprune {

// ---------------------------------------------------------------------------
// DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "matrix data holds " << data_.size() << " values, expected " << rows_ << "x" << cols_;
    throw DimensionError(os.str());
  }
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      std::ostringstream os;
      os << "non-finite matrix entry at (" << k / std::max<std::size_t>(cols_, 1) << ", "
         << k % std::max<std::size_t>(cols_, 1) << ")";
      throw DataError(os.str());
    }
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

DenseMatrix DenseMatrix::block(std::size_t r0, std::size_t c0, std::size_t nrows,
                               std::size_t ncols) const {
  if (r0 + nrows > rows_ || c0 + ncols > cols_) {
    std::ostringstream os;
    os << "block (" << r0 << ", " << c0 << ") of size " << nrows << "x" << ncols
       << " exceeds " << shape();
    throw DimensionError(os.str());
  }
  DenseMatrix out(nrows, ncols);
  for (std::size_t i = 0; i < nrows; ++i) {
    auto src = row(r0 + i).subspan(c0, ncols);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::string DenseMatrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

// ---------------------------------------------------------------------------
// Products and norms

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: cannot multiply " + a.shape() + " by (" +
                         b.shape() + ")^T");
  }
  DenseMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ai.size(); ++k) s += ai[k] * bj[k];
      c(i, j) = s;
    }
  }
  return c;
}

double frobenius_norm_sq(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double inf_norm(const DenseMatrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_abs_diff: " + a.shape() + " vs " + b.shape());
  }
  double best = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) best = std::max(best, std::abs(av[k] - bv[k]));
  return best;
}

bool is_symmetric(const DenseMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  double scale = 1.0;
  for (double v : a.values()) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (std::abs(a(i, j) - a(j, i)) > tol * scale) return false;
  return true;
}

double order_independent_sum(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return std::accumulate(sorted.begin(), sorted.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Cholesky and SPD inverse

DenseMatrix cholesky(const DenseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix " + a.shape() + " is not square");
  if (!is_symmetric(a, 1e-10)) throw NumericalError("cholesky: matrix is not symmetric");
  const std::size_t n = a.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) d -= lj[k] * lj[k];
    // A pivot that is only round-off of the diagonal means a rank-deficient matrix.
    const double floor = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * std::abs(a(j, j));
    if (!(d > floor)) {
      throw NotPositiveDefinite(j, "cholesky: matrix is not positive definite (pivot " +
                                       std::to_string(j) + " is " + std::to_string(d) + ")");
    }
    const double djj = std::sqrt(d);
    lj[j] = djj;
    for (std::size_t i = j + 1; i < n; ++i) {
      auto li = l.row(i);
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= li[k] * lj[k];
      li[j] = s / djj;
    }
  }
  return l;
}

DenseMatrix cholesky_solve(const DenseMatrix& lower, const DenseMatrix& b) {
  const std::size_t n = lower.rows();
  if (lower.cols() != n || b.rows() != n) {
    throw DimensionError("cholesky_solve: factor " + lower.shape() + " vs rhs " + b.shape());
  }
  DenseMatrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    // L y = b
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
    // L^T x = y
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x(k, c);
      x(ii, c) = s / lower(ii, ii);
    }
  }
  return x;
}

DenseMatrix spd_inverse(const DenseMatrix& a) {
  const DenseMatrix l = cholesky(a);
  const std::size_t n = l.rows();

  // Invert L in place (lower triangular), then A^{-1} = L^{-T} L^{-1}.
  DenseMatrix linv(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    linv(j, j) = 1.0 / l(j, j);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = j; k < i; ++k) s -= l(i, k) * linv(k, j);
      linv(i, j) = s / l(i, i);
    }
  }
  DenseMatrix inv(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (std::size_t k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
      inv(i, j) = s;
      inv(j, i) = s;
    }
  }
  return inv;
}

// ---------------------------------------------------------------------------
// Batched solves

namespace {

// Solves lambda * m = rhs via LU with partial pivoting on m^T. Only the first
// `active` pivots are checked against the singularity threshold; the rest
// belong to the identity padding.
std::vector<double> solve_padded(const DenseMatrix& m, std::vector<double> rhs, std::size_t active,
                                 double threshold, std::size_t index) {
  const std::size_t n = m.rows();
  DenseMatrix a = m.transpose();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(a(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        piv = i;
      }
    }
    if (k < active && !(best > threshold)) {
      throw SingularSystem(index, "solve_batch: system " + std::to_string(index) +
                                      " is singular (pivot " + std::to_string(k) + ")");
    }
    if (piv != k) {
      std::swap_ranges(a.row(k).begin(), a.row(k).end(), a.row(piv).begin());
      std::swap(rhs[k], rhs[piv]);
    }
    const double pivot = a(k, k);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / pivot;
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      rhs[i] -= f * rhs[k];
    }
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = rhs[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= a(ii, j) * rhs[j];
    rhs[ii] = s / a(ii, ii);
  }
  return rhs;
}

}  // namespace

DenseMatrix solve_batch(std::span<const LinearSystem> systems, const BatchSolveOptions& options) {
  std::size_t widest = 0;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    const auto& sys = systems[i];
    if (sys.lhs.rows() != sys.lhs.cols() || sys.rhs.size() != sys.lhs.rows()) {
      throw DimensionError("solve_batch: system " + std::to_string(i) + " has matrix " +
                           sys.lhs.shape() + " and rhs of length " + std::to_string(sys.rhs.size()));
    }
    widest = std::max(widest, sys.rhs.size());
  }

  DenseMatrix out(systems.size(), widest);
  const std::size_t chunk = std::max<std::size_t>(options.chunk_rows, 1);
  const std::size_t nchunks = (systems.size() + chunk - 1) / chunk;

  parallel_for(nchunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(systems.size(), lo + chunk);
    std::size_t r_max = 0;
    for (std::size_t i = lo; i < hi; ++i) r_max = std::max(r_max, systems[i].rhs.size());

    for (std::size_t i = lo; i < hi; ++i) {
      const auto& sys = systems[i];
      const std::size_t s = sys.rhs.size();
      DenseMatrix padded = DenseMatrix::identity(r_max);
      double scale = 0.0;
      for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b < s; ++b) {
          padded(a, b) = sys.lhs(a, b);
          scale = std::max(scale, std::abs(sys.lhs(a, b)));
        }
      }
      std::vector<double> rhs(r_max, 0.0);
      std::copy(sys.rhs.begin(), sys.rhs.end(), rhs.begin());

      auto solution = solve_padded(padded, std::move(rhs), s, options.singular_tolerance * scale, i);
      std::copy(solution.begin(), solution.end(), out.row(i).begin());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Permutations

Permutation::Permutation(std::vector<std::size_t> mapping) : mapping_(std::move(mapping)) {
  std::vector<bool> seen(mapping_.size(), false);
  for (std::size_t v : mapping_) {
    if (v >= mapping_.size() || seen[v]) {
      throw ConfigError("permutation is not a bijection on 0.." +
                        std::to_string(mapping_.size()) + "-1");
    }
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> m(n);
  std::iota(m.begin(), m.end(), std::size_t{0});
  return Permutation(std::move(m));
}

Permutation Permutation::sorting_ascending(std::span<const double> keys) {
  std::vector<std::size_t> m(keys.size());
  std::iota(m.begin(), m.end(), std::size_t{0});
  std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  return Permutation(std::move(m));
}

Permutation Permutation::inverse() const {
  std::vector<std::size_t> inv(mapping_.size());
  for (std::size_t k = 0; k < mapping_.size(); ++k) inv[mapping_[k]] = k;
  return Permutation(std::move(inv));
}

namespace {

void check_length(std::size_t dim, const Permutation& p, const char* what) {
  if (p.size() != dim) {
    throw DimensionError(std::string(what) + ": permutation of length " + std::to_string(p.size()) +
                         " applied to dimension " + std::to_string(dim));
  }
}

}  // namespace

DenseMatrix permute_rows(const DenseMatrix& w, const Permutation& q) {
  check_length(w.rows(), q, "permute_rows");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto src = w.row(q[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

DenseMatrix inverse_permute_rows(const DenseMatrix& w, const Permutation& q) {
  check_length(w.rows(), q, "inverse_permute_rows");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    auto src = w.row(k);
    std::copy(src.begin(), src.end(), out.row(q[k]).begin());
  }
  return out;
}

DenseMatrix permute_cols(const DenseMatrix& w, const Permutation& p) {
  check_length(w.cols(), p, "permute_cols");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t k = 0; k < w.cols(); ++k) out(i, k) = w(i, p[k]);
  return out;
}

DenseMatrix inverse_permute_cols(const DenseMatrix& w, const Permutation& p) {
  check_length(w.cols(), p, "inverse_permute_cols");
  DenseMatrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t k = 0; k < w.cols(); ++k) out(i, p[k]) = w(i, k);
  return out;
}

DenseMatrix permute_symmetric(const DenseMatrix& h, const Permutation& p) {
  check_length(h.rows(), p, "permute_symmetric");
  check_length(h.cols(), p, "permute_symmetric");
  DenseMatrix out(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i)
    for (std::size_t j = 0; j < h.cols(); ++j) out(i, j) = h(p[i], p[j]);
  return out;
}

}  // namespace blockprune
