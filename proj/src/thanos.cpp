#include "blockprune/thanos.hpp"

#include <algorithm>
#include <functional>
#include <string>

#include "blockprune/baselines.hpp"
#include "blockprune/error.hpp"
#include "blockprune/parallel.hpp"

namespace blockprune {

std::size_t effective_block_size(const ThanosConfig& cfg, std::size_t cols) {
  std::size_t block = cfg.block_size;
  if (block == 0) {
    block = cfg.pattern == Pattern::SemiStructured ? kDefaultSemiStructuredBlock : kDefaultUnstructuredBlock;
  }
  return std::min(block, cols);
}

std::size_t outlier_count(double alpha, std::size_t rows) {
  check_fraction(alpha, "outlier fraction alpha");
  return ceil_count(alpha * static_cast<double>(rows));
}

std::size_t structured_column_count(double p, double alpha, std::size_t cols) {
  check_fraction(p, "sparsity");
  check_fraction(alpha, "outlier fraction alpha");
  return ceil_count(p * static_cast<double>(cols) / (1.0 - alpha));
}

RowUpdateSystem build_row_system(std::span<const double> w, const IndexSet& q, const DenseMatrix& hinv) {
  if (hinv.rows() != w.size() || hinv.cols() != w.size()) {
    throw DimensionError("row of width " + std::to_string(w.size()) + " vs inverse Hessian " + hinv.shape());
  }
  const std::size_t s = q.size();
  RowUpdateSystem sys{DenseMatrix(s, w.size()), DenseMatrix(s, s), std::vector<double>(s)};
  for (std::size_t a = 0; a < s; ++a) {
    if (q[a] >= w.size()) throw DimensionError("removal index outside the row");
    auto src = hinv.row(q[a]);
    std::copy(src.begin(), src.end(), sys.r.row(a).begin());
    for (std::size_t t = 0; t < s; ++t) sys.rhat(a, t) = src[q[t]];
    sys.u[a] = w[q[a]];
  }
  return sys;
}

namespace {

LinearSystem make_system(std::span<const double> w, const IndexSet& q, const DenseMatrix& hinv) {
  const std::size_t s = q.size();
  LinearSystem sys{DenseMatrix(s, s), std::vector<double>(s)};
  for (std::size_t a = 0; a < s; ++a) {
    for (std::size_t t = 0; t < s; ++t) sys.lhs(a, t) = hinv(q[a], q[t]);
    sys.rhs[a] = w[q[a]];
  }
  return sys;
}

// w <- w - lambda * R, then force the removed positions to exact zero.
void apply_update(std::span<double> w, const IndexSet& q, const DenseMatrix& hinv,
                  std::span<const double> lambda) {
  for (std::size_t t = 0; t < q.size(); ++t) {
    const double lt = lambda[t];
    if (lt == 0.0) continue;
    auto h = hinv.row(q[t]);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lt * h[j];
  }
  for (std::size_t idx : q) w[idx] = 0.0;
}

void check_layer(const DenseMatrix& w, const CalibrationSet& cal) {
  if (w.cols() != cal.features()) {
    throw DimensionError("weights " + w.shape() + " do not match calibration inputs with " +
                         std::to_string(cal.features()) + " features");
  }
}

// Returns the c x (j2 - j1) mask for the block [j1, j2) given the current weights.
using BlockMaskFn = std::function<PruneMask(const DenseMatrix&, std::size_t, std::size_t)>;

// Visits column blocks left to right. For every row with removals in the
// block, applies the constrained update over the trailing window [j1, b).
// Rows at or beyond `active_rows` are never touched.
void run_blocks(DenseMatrix& w, const DenseMatrix& gram, std::size_t block, std::size_t active_rows,
                const ThanosConfig& cfg, const BlockMaskFn& block_mask, PruneMask& full_mask) {
  const std::size_t c = w.rows();
  const std::size_t b = w.cols();
  const std::size_t chunk = std::max<std::size_t>(cfg.row_chunk, 1);

  for (std::size_t j1 = 0; j1 < b; j1 += block) {
    const std::size_t j2 = std::min(b, j1 + block);
    PruneMask local = block_mask(w, j1, j2);
    full_mask.paste(local, 0, j1);

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < std::min(c, active_rows); ++i)
      if (local.row_count(i) > 0) rows.push_back(i);
    if (rows.empty()) continue;

    const Hessian hess = hessian_from_gram(gram, j1, cfg.lambda_rel);
    const DenseMatrix& hinv = hess.hinv;

    for (std::size_t lo = 0; lo < rows.size(); lo += chunk) {
      const std::size_t hi = std::min(rows.size(), lo + chunk);
      std::vector<IndexSet> removals;
      std::vector<LinearSystem> systems;
      removals.reserve(hi - lo);
      systems.reserve(hi - lo);
      for (std::size_t k = lo; k < hi; ++k) {
        removals.push_back(phi_indices(local.row(rows[k])));
        systems.push_back(make_system(w.row(rows[k]).subspan(j1), removals.back(), hinv));
      }

      DenseMatrix lambdas;
      try {
        lambdas = solve_batch(systems, {chunk, cfg.singular_tolerance});
      } catch (const SingularSystem& e) {
        const std::size_t row = rows[lo + e.batch_index()];
        throw SingularSystem(row, "row " + std::to_string(row) + ", block starting at column " +
                                      std::to_string(j1) + ": " + e.what() +
                                      "; increase the damping fraction");
      }

      parallel_for(hi - lo, [&](std::size_t k) {
        apply_update(w.row(rows[lo + k]).subspan(j1), removals[k], hinv, lambdas.row(k));
      });
    }
  }
}

PruneOutcome finish(std::string method, const DenseMatrix& original, DenseMatrix pruned, PruneMask mask,
                    const DenseMatrix& gram) {
  PruneOutcome out;
  out.method = std::move(method);
  out.pruned = std::move(pruned);
  out.mask = std::move(mask);
  score_outcome(out, original, gram);
  return out;
}

}  // namespace

RowUpdate thanos_row_update(std::span<const double> w, const IndexSet& q, const DenseMatrix& hinv,
                            double singular_tolerance) {
  if (hinv.rows() != w.size() || hinv.cols() != w.size()) {
    throw DimensionError("row of width " + std::to_string(w.size()) + " vs inverse Hessian " + hinv.shape());
  }
  if (q.empty()) throw ConfigError("thanos_row_update needs at least one index to remove");
  if (q[q.size() - 1] >= w.size()) throw DimensionError("removal index outside the row");

  const LinearSystem sys = make_system(w, q, hinv);
  const DenseMatrix lambda = solve_batch(std::span<const LinearSystem>(&sys, 1), {1, singular_tolerance});

  std::vector<double> updated(w.begin(), w.end());
  apply_update(updated, q, hinv, lambda.row(0));

  RowUpdate out;
  out.delta.resize(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) out.delta[j] = updated[j] - w[j];
  for (std::size_t idx : q) out.delta[idx] = -w[idx];
  // u * Rhat^{-1} * R * H * R^T * Rhat^{-T} * u^T collapses to lambda * u^T, since R H R^T = Rhat.
  double s = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t) s += lambda(0, t) * sys.rhs[t];
  out.saliency = 0.5 * s;
  return out;
}

PruneOutcome prune_thanos_unstructured(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg) {
  check_layer(w, cal);
  check_fraction(cfg.sparsity, "sparsity");
  const std::size_t c = w.rows();
  const std::size_t b = w.cols();
  const std::size_t block = effective_block_size(cfg, b);
  const DenseMatrix gram = accumulate_gram(cal);
  const RowNorms norms = row_norms(cal);

  std::size_t budget = floor_count(cfg.sparsity, c * b);
  auto residual = [&](const DenseMatrix& cur, std::size_t j1, std::size_t j2) {
    const std::size_t cells = c * (b - j1);
    if (budget > cells) {
      throw ConfigError("residual budget of " + std::to_string(budget) + " exceeds the " +
                        std::to_string(cells) + " weights left at column " + std::to_string(j1));
    }
    PruneMask global = psi_select(cur.block(0, j1, c, b - j1), norms.tail(j1), budget);
    PruneMask local = global.slice_cols(0, j2 - j1);
    budget -= local.popcount();
    return local;
  };

  DenseMatrix pruned = w;
  PruneMask mask(c, b);
  run_blocks(pruned, gram, block, c, cfg, residual, mask);
  return finish("thanos", w, std::move(pruned), std::move(mask), gram);
}

PruneOutcome prune_thanos_with_mask(const DenseMatrix& w, const CalibrationSet& cal, const PruneMask& mask,
                                    const ThanosConfig& cfg) {
  check_layer(w, cal);
  if (mask.rows() != w.rows() || mask.cols() != w.cols()) {
    throw DimensionError("mask does not match weights " + w.shape());
  }
  const std::size_t block = effective_block_size(cfg, w.cols());
  const DenseMatrix gram = accumulate_gram(cal);
  auto fixed = [&](const DenseMatrix&, std::size_t j1, std::size_t j2) { return mask.slice_cols(j1, j2 - j1); };

  DenseMatrix pruned = w;
  PruneMask used(w.rows(), w.cols());
  run_blocks(pruned, gram, block, w.rows(), cfg, fixed, used);
  return finish("thanos", w, std::move(pruned), std::move(used), gram);
}

std::vector<double> outlier_row_losses(const DenseMatrix& w, const CalibrationSet& cal) {
  check_layer(w, cal);
  std::vector<double> h(w.rows(), 0.0);
  for (const auto& x : cal.samples()) {
    const DenseMatrix y = matmul(w, x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double s = 0.0;
      for (double v : y.row(i)) s += v * v;
      h[i] += s;
    }
  }
  const double d = static_cast<double>(cal.count());
  for (double& v : h) v /= d;
  return h;
}

std::vector<double> column_losses(const DenseMatrix& w, const CalibrationSet& cal, std::size_t outliers) {
  check_layer(w, cal);
  if (outliers > w.rows()) throw ConfigError("more outlier rows than rows");
  const std::size_t kept = w.rows() - outliers;

  std::vector<double> input_energy(w.cols(), 0.0);
  for (const auto& x : cal.samples()) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (double v : x.row(j)) s += v * v;
      input_energy[j] += s;
    }
  }
  const double d = static_cast<double>(cal.count());

  std::vector<double> v(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < kept; ++i) col += w(i, j) * w(i, j);
    v[j] = col * (input_energy[j] / d);
  }
  return v;
}

PruneOutcome prune_thanos_nm(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg) {
  check_layer(w, cal);
  const std::size_t c = w.rows();
  const std::size_t b = w.cols();
  if (cfg.n == 0 || cfg.n >= cfg.m || cfg.m > b) {
    throw ConfigError("n:m pattern needs 0 < n < m <= " + std::to_string(b) + ", got " + std::to_string(cfg.n) +
                      ":" + std::to_string(cfg.m));
  }
  const std::size_t block = effective_block_size(cfg, b);
  if (block < b && block % cfg.m != 0) {
    throw ConfigError("block size " + std::to_string(block) + " must be a multiple of m = " + std::to_string(cfg.m));
  }
  const std::size_t outliers = outlier_count(cfg.alpha, c);
  const std::size_t active = c - outliers;

  const DenseMatrix gram = accumulate_gram(cal);
  const RowNorms norms = row_norms(cal);
  const Permutation rows_by_loss = Permutation::sorting_ascending(outlier_row_losses(w, cal));

  auto groups = [&](const DenseMatrix& cur, std::size_t j1, std::size_t j2) {
    const std::size_t width = j2 - j1;
    PruneMask local = nm_mask(cur.block(0, j1, c, width), std::span<const double>(norms.values).subspan(j1, width),
                              cfg.n, cfg.m);
    for (std::size_t i = active; i < c; ++i)
      for (std::size_t j = 0; j < width; ++j) local.set(i, j, false);
    return local;
  };

  DenseMatrix permuted = permute_rows(w, rows_by_loss);
  PruneMask permuted_mask(c, b);
  run_blocks(permuted, gram, block, active, cfg, groups, permuted_mask);

  PruneMask mask(c, b);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t j = 0; j < b; ++j) mask.set(rows_by_loss[k], j, permuted_mask.test(k, j));

  return finish("thanos", w, inverse_permute_rows(permuted, rows_by_loss), std::move(mask), gram);
}

PruneOutcome prune_thanos_structured(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg) {
  check_layer(w, cal);
  const std::size_t c = w.rows();
  const std::size_t b = w.cols();
  const std::size_t s = structured_column_count(cfg.sparsity, cfg.alpha, b);
  if (s > b) {
    throw ConfigError("alpha too large for target sparsity: " + std::to_string(s) + " of " + std::to_string(b) +
                      " columns would have to go");
  }
  const DenseMatrix gram = accumulate_gram(cal);
  if (s == 0) return finish("thanos", w, w, PruneMask(c, b), gram);

  const std::size_t outliers = outlier_count(cfg.alpha, c);
  const std::size_t active = c - outliers;

  // Outlier rows last, then the cheapest columns first.
  const Permutation rows_by_loss = Permutation::sorting_ascending(outlier_row_losses(w, cal));
  const DenseMatrix row_sorted = permute_rows(w, rows_by_loss);
  const Permutation cols_by_loss = Permutation::sorting_ascending(column_losses(row_sorted, cal, outliers));
  DenseMatrix work = permute_cols(row_sorted, cols_by_loss);

  const Hessian hess = hessian_from_gram(permute_symmetric(gram, cols_by_loss), 0, cfg.lambda_rel);
  const DenseMatrix& hinv = hess.hinv;
  DenseMatrix rhat_factor;
  try {
    rhat_factor = cholesky(hinv.block(0, 0, s, s));
  } catch (const NotPositiveDefinite& e) {
    throw NumericalError(std::string("structured update: ") + e.what() + "; increase the damping fraction");
  }

  // Lambda^T = Rhat^{-1} W[:, :s]^T, one column per non-outlier row.
  const DenseMatrix lambda_t = cholesky_solve(rhat_factor, work.block(0, 0, active, s).transpose());
  parallel_for(active, [&](std::size_t i) {
    auto row = work.row(i);
    for (std::size_t t = 0; t < s; ++t) {
      const double lt = lambda_t(t, i);
      if (lt == 0.0) continue;
      auto h = hinv.row(t);
      for (std::size_t j = 0; j < b; ++j) row[j] -= lt * h[j];
    }
    for (std::size_t t = 0; t < s; ++t) row[t] = 0.0;
  });

  PruneMask mask(c, b);
  for (std::size_t i = 0; i < active; ++i)
    for (std::size_t t = 0; t < s; ++t) mask.set(rows_by_loss[i], cols_by_loss[t]);

  DenseMatrix restored = inverse_permute_rows(inverse_permute_cols(work, cols_by_loss), rows_by_loss);
  return finish("thanos", w, std::move(restored), std::move(mask), gram);
}

PruneOutcome prune_thanos(const DenseMatrix& w, const CalibrationSet& cal, const ThanosConfig& cfg) {
  switch (cfg.pattern) {
    case Pattern::Unstructured:
      return prune_thanos_unstructured(w, cal, cfg);
    case Pattern::SemiStructured:
      return prune_thanos_nm(w, cal, cfg);
    case Pattern::Structured:
      return prune_thanos_structured(w, cal, cfg);
  }
  throw ConfigError("unknown pruning pattern");
}

}  // namespace blockprune
