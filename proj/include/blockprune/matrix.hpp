#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace blockprune {

/// Row-major matrix of doubles. Weights, activations, Hessians and weight
/// deltas all travel in this type.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws DimensionError on a size mismatch and
  /// DataError if any entry is NaN or infinite.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  DenseMatrix transpose() const;
  /// Copy of the `nrows` x `ncols` window starting at (`r0`, `c0`).
  DenseMatrix block(std::size_t r0, std::size_t c0, std::size_t nrows, std::size_t ncols) const;

  std::string shape() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T without forming the transpose.
DenseMatrix matmul_transposed(const DenseMatrix& a, const DenseMatrix& b);

double frobenius_norm_sq(const DenseMatrix& a);
/// Largest absolute row sum.
double inf_norm(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
/// True when every entry and its mirror differ by at most tol * max(1, max|a|).
bool is_symmetric(const DenseMatrix& a, double tol);
/// Sum of `values` accumulated in ascending order, so the result does not
/// depend on the order they are given in.
double order_independent_sum(std::span<const double> values);

/// Lower Cholesky factor L with L * L^T = a. Throws NotPositiveDefinite naming
/// the first pivot that is not strictly positive.
DenseMatrix cholesky(const DenseMatrix& a);
/// Solves a * x = b for every column of b, given the lower Cholesky factor of a.
DenseMatrix cholesky_solve(const DenseMatrix& lower, const DenseMatrix& b);
/// Inverse of a symmetric positive-definite matrix, symmetrized on output.
DenseMatrix spd_inverse(const DenseMatrix& a);

/// One system of the form lambda * lhs = rhs, with lhs square.
struct LinearSystem {
  DenseMatrix lhs;
  std::vector<double> rhs;
};

struct BatchSolveOptions {
  /// Systems solved together per padded group.
  std::size_t chunk_rows = 256;
  /// A pivot smaller than this fraction of the system's largest entry marks it singular.
  double singular_tolerance = 1e-13;
};

/// Solves every system after padding it to the largest size in its chunk: the
/// right-hand side gets trailing zeros and the matrix a trailing identity
/// block. Returns one row per system, padded with zeros to the widest system.
/// Throws SingularSystem carrying the index of the offending system.
DenseMatrix solve_batch(std::span<const LinearSystem> systems, const BatchSolveOptions& options = {});

/// Bijection on {0, ..., n-1}. Slot k of the permuted object receives source
/// index `mapping[k]`.
class Permutation {
 public:
  Permutation() = default;
  explicit Permutation(std::vector<std::size_t> mapping);

  static Permutation identity(std::size_t n);
  /// Orders indices by ascending key; equal keys keep ascending index order.
  static Permutation sorting_ascending(std::span<const double> keys);

  std::size_t size() const noexcept { return mapping_.size(); }
  std::size_t operator[](std::size_t k) const { return mapping_[k]; }
  std::span<const std::size_t> mapping() const noexcept { return mapping_; }
  Permutation inverse() const;

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<std::size_t> mapping_;
};

DenseMatrix permute_rows(const DenseMatrix& w, const Permutation& q);
DenseMatrix inverse_permute_rows(const DenseMatrix& w, const Permutation& q);
DenseMatrix permute_cols(const DenseMatrix& w, const Permutation& p);
DenseMatrix inverse_permute_cols(const DenseMatrix& w, const Permutation& p);
/// Same permutation applied to both rows and columns of a square matrix.
DenseMatrix permute_symmetric(const DenseMatrix& h, const Permutation& p);

}  // namespace blockprune
