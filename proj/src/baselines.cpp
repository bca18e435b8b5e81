#include "blockprune/baselines.hpp"

#include <algorithm>
#include <string>

#include "blockprune/error.hpp"

namespace blockprune {

void score_outcome(PruneOutcome& outcome, const DenseMatrix& original, const DenseMatrix& gram) {
  DenseMatrix zeroing(original.rows(), original.cols());
  DenseMatrix delta(original.rows(), original.cols());
  for (std::size_t i = 0; i < original.rows(); ++i) {
    for (std::size_t j = 0; j < original.cols(); ++j) {
      if (outcome.mask.test(i, j)) zeroing(i, j) = -original(i, j);
      delta(i, j) = outcome.pruned(i, j) - original(i, j);
    }
  }
  outcome.loss_before = reconstruction_loss(zeroing, gram);
  outcome.loss_after = reconstruction_loss(delta, gram);
}

namespace {

void check_layer(const DenseMatrix& w, const CalibrationSet& cal) {
  if (w.cols() != cal.features()) {
    throw DimensionError("weights " + w.shape() + " do not match calibration inputs with " +
                         std::to_string(cal.features()) + " features");
  }
}

PruneOutcome zero_masked(const DenseMatrix& w, const CalibrationSet& cal, PruneMask mask, const char* method) {
  PruneOutcome out;
  out.method = method;
  out.pruned = w;
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j)
      if (mask.test(i, j)) out.pruned(i, j) = 0.0;
  out.mask = std::move(mask);
  score_outcome(out, w, accumulate_gram(cal));
  return out;
}

}  // namespace

PruneOutcome prune_magnitude(const DenseMatrix& w, const CalibrationSet& cal, double p) {
  check_layer(w, cal);
  return zero_masked(w, cal, magnitude_mask(w, p), "magnitude");
}

PruneOutcome prune_wanda(const DenseMatrix& w, const CalibrationSet& cal, double p) {
  check_layer(w, cal);
  const RowNorms norms = row_norms(cal);
  return zero_masked(w, cal, wanda_rowwise_mask(w, norms.values, p), "wanda");
}

ObsStep obs_single_step(const DenseMatrix& w, const Hessian& hessian, std::size_t k, std::size_t q) {
  const DenseMatrix& hinv = hessian.hinv;
  if (w.cols() != hinv.rows()) {
    throw DimensionError("obs_single_step: weights " + w.shape() + " vs inverse Hessian " + hinv.shape());
  }
  if (k >= w.rows() || q >= w.cols()) throw DimensionError("obs_single_step: (k, q) out of range");
  const double d = hinv(q, q);
  if (!(d > 0.0)) throw NumericalError("obs_single_step: inverse Hessian diagonal at " + std::to_string(q) +
                                       " is not positive");

  ObsStep step;
  auto src = w.row(k);
  step.row.assign(src.begin(), src.end());
  const double wq = src[q];
  const double scale = wq / d;
  auto hq = hinv.row(q);
  for (std::size_t j = 0; j < step.row.size(); ++j) step.row[j] -= scale * hq[j];
  step.row[q] = 0.0;
  step.saliency = 0.5 * wq * wq / d;
  return step;
}

PruneOutcome prune_sparsegpt(const DenseMatrix& w, const CalibrationSet& cal, const SparseGptOptions& options) {
  check_layer(w, cal);
  const std::size_t c = w.rows();
  const std::size_t b = w.cols();
  const auto& target = options.target;

  std::size_t block = options.block_size;
  std::size_t mask_block = options.mask_block_size == 0 ? block : options.mask_block_size;
  if (target.kind == SparsityTarget::Kind::NM) {
    if (target.n == 0 || target.n >= target.m) throw ConfigError("n:m pattern needs 0 < n < m");
    mask_block = target.m;
  } else {
    check_fraction(target.ratio, "sparsity");
  }
  if (block == 0 || mask_block == 0 || block % mask_block != 0) {
    throw ConfigError("mask block size " + std::to_string(mask_block) + " must divide block size " +
                      std::to_string(block));
  }

  const DenseMatrix gram = accumulate_gram(cal);
  const Hessian hess = hessian_from_gram(gram, 0, options.lambda_rel);
  // hinv = U^T U. Row j of U, scaled by U_jj, is the first row of the inverse
  // of the trailing Hessian window starting at column j.
  DenseMatrix upper;
  try {
    upper = cholesky(hess.hinv).transpose();
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), std::string(e.what()) + "; increase the damping fraction");
  }

  PruneOutcome out;
  out.method = "sparsegpt";
  out.pruned = w;
  out.mask = PruneMask(c, b);
  DenseMatrix& wk = out.pruned;

  for (std::size_t j1 = 0; j1 < b; j1 += block) {
    const std::size_t j1e = std::min(b, j1 + block);
    DenseMatrix err(c, j1e - j1);

    for (std::size_t j = j1; j < j1e; ++j) {
      if ((j - j1) % mask_block == 0) {
        const std::size_t width = std::min(mask_block, b - j);
        // Inverse-Hessian diagonal of the current window H[j:, j:].
        std::vector<double> diag(width, 0.0);
        for (std::size_t t = 0; t < width; ++t)
          for (std::size_t r = j; r <= j + t; ++r) diag[t] += upper(r, j + t) * upper(r, j + t);
        DenseMatrix scores(c, width);
        for (std::size_t i = 0; i < c; ++i)
          for (std::size_t t = 0; t < width; ++t) scores(i, t) = wk(i, j + t) * wk(i, j + t) / diag[t];
        PruneMask local = target.kind == SparsityTarget::Kind::NM
                              ? nm_scores_mask(scores, target.n, target.m)
                              : smallest_scores_mask(scores, floor_count(target.ratio, c * width));
        out.mask.paste(local, 0, j);
      }

      const double ujj = upper(j, j);
      for (std::size_t i = 0; i < c; ++i) {
        if (!out.mask.test(i, j)) continue;
        const double e = wk(i, j) / ujj;
        if (options.trace != nullptr && !options.trace->recorded) {
          auto& tr = *options.trace;
          tr.recorded = true;
          tr.row = i;
          tr.col = j;
          tr.row_after.resize(b - j);
          for (std::size_t t = j; t < b; ++t) tr.row_after[t - j] = wk(i, t) - e * upper(j, t);
          tr.row_after[0] = 0.0;
          tr.saliency = 0.5 * e * e;
        }
        for (std::size_t t = j; t < j1e; ++t) wk(i, t) -= e * upper(j, t);
        wk(i, j) = 0.0;
        err(i, j - j1) = e;
      }
    }

    // Deferred compensation of the columns right of the block.
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = j1; j < j1e; ++j) {
        const double e = err(i, j - j1);
        if (e == 0.0) continue;
        for (std::size_t t = j1e; t < b; ++t) wk(i, t) -= e * upper(j, t);
      }
    }
  }

  score_outcome(out, w, gram);
  return out;
}

}  // namespace blockprune
