#include "doctest.h"

#include "blockprune/baselines.hpp"
#include "blockprune/error.hpp"
#include "blockprune/oracle.hpp"
#include "test_support.hpp"

using namespace blockprune;
using testing::Rng;

namespace {

bool zero_exactly_on_mask(const PruneOutcome& out) {
  for (std::size_t i = 0; i < out.pruned.rows(); ++i)
    for (std::size_t j = 0; j < out.pruned.cols(); ++j)
      if (out.mask.test(i, j) && out.pruned(i, j) != 0.0) return false;
  return true;
}

// Damped Hessian of the whole layer, restricted to columns [from, b) and inverted.
Hessian window_of_full(const CalibrationSet& cal, double lambda_rel, std::size_t from) {
  const Hessian full = compute_hessian(cal, lambda_rel);
  const std::size_t n = full.h.rows() - from;
  Hessian h;
  h.h = full.h.block(from, from, n, n);
  h.hinv = spd_inverse(h.h);
  h.offset = from;
  return h;
}

}  // namespace

TEST_CASE("magnitude pruning") {
  Rng rng(31);
  const CalibrationSet cal = rng.calibration(8, 12, 2);
  const DenseMatrix w = rng.matrix(8, 8);

  const PruneOutcome none = prune_magnitude(w, cal, 0.0);
  CHECK(none.pruned == w);
  CHECK(none.loss_after == 0.0);

  const PruneOutcome half = prune_magnitude(w, cal, 0.5);
  CHECK(half.mask == testing::sort_oracle_mask(testing::abs_scores(w, std::vector<double>(8, 1.0)), 32));
  CHECK(zero_exactly_on_mask(half));
  DenseMatrix masked = w;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) masked(i, j) = half.mask.test(i, j) ? -w(i, j) : 0.0;
  CHECK(testing::rel_diff(half.loss_after, testing::naive_loss(masked, cal)) < 1e-12);
  CHECK(half.loss_after == half.loss_before);
  CHECK(half.method == "magnitude");

  const DenseMatrix diag{{5, 0, 0}, {0, -1, 0}, {0, 0, 3}};
  const CalibrationSet small = rng.calibration(3, 4);
  CHECK(prune_magnitude(diag, small, 0.7).pruned == diag);  // the six zeros go first
  CHECK(prune_magnitude(diag, small, 0.8).pruned == DenseMatrix{{5, 0, 0}, {0, 0, 0}, {0, 0, 3}});
}

TEST_CASE("wanda pruning") {
  const CalibrationSet ex({DenseMatrix{{4, 3}, {0, 1}}});
  const DenseMatrix w{{3, -2}, {-2, 4}, {1, -6}};
  const PruneOutcome out = prune_wanda(w, ex, 0.5);
  CHECK(out.pruned == DenseMatrix{{3, 0}, {-2, 0}, {0, -6}});
  CHECK(prune_wanda(w, ex, 0.0).pruned == w);

  const DenseMatrix col{{2}, {-1}};
  CHECK(prune_wanda(col, CalibrationSet({DenseMatrix{{1, 2}}}), 0.5).pruned == col);

  Rng rng(32);
  for (int t = 0; t < 20; ++t) {
    const CalibrationSet cal = rng.calibration(7, 10, 3);
    const DenseMatrix wr = rng.matrix(5, 7);
    const auto norms = testing::naive_norms(cal);
    const PruneOutcome o = prune_wanda(wr, cal, 0.4);
    CHECK(o.mask == testing::sort_oracle_rowwise(testing::abs_scores(wr, norms), floor_count(0.4, 7)));
    CHECK(zero_exactly_on_mask(o));
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        if (!o.mask.test(i, j)) CHECK(o.pruned(i, j) == wr(i, j));

    DenseMatrix scaled = wr;
    for (double& v : scaled.values()) v *= 0.3;
    CHECK(prune_wanda(scaled, cal, 0.4).mask == o.mask);
  }
  CHECK_THROWS_AS(prune_wanda(w, CalibrationSet({DenseMatrix(3, 2)}), 0.5), DimensionError);
}

TEST_CASE("obs single step") {
  const CalibrationSet diag({DenseMatrix{{2, 0, 0}, {0, 1, 0}, {0, 0, 3}}});
  const Hessian h = compute_hessian(diag, 0.0);
  const DenseMatrix w{{1, 2, 3}};
  const ObsStep s = obs_single_step(w, h, 0, 1);
  CHECK(s.row == std::vector<double>{1, 0, 3});

  const DenseMatrix wz{{1, 0, 3}};
  const ObsStep z = obs_single_step(wz, h, 0, 1);
  CHECK(z.row == std::vector<double>{1, 0, 3});
  CHECK(z.saliency == 0.0);

  Rng rng(33);
  for (int t = 0; t < 50; ++t) {
    const CalibrationSet cal = rng.calibration(4, 9, 2);
    const DenseMatrix wr = rng.matrix(1, 4);
    const std::size_t q = rng.index(0, 3);
    const ObsStep st = obs_single_step(wr, compute_hessian(cal, 0.0), 0, q);
    const auto delta = oracle::constrained_lsq(wr.row(0), IndexSet({q}, 4), cal);
    DenseMatrix d(1, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      d(0, j) = st.row[j] - wr(0, j);
      CHECK(std::abs(st.row[j] - (wr(0, j) + delta[j])) < 1e-9);
    }
    CHECK(testing::rel_diff(st.saliency, testing::naive_loss(d, cal)) < 1e-9);
  }
  CHECK_THROWS_AS(obs_single_step(w, h, 1, 0), DimensionError);
}

TEST_CASE("obs saliency argmin agrees with the true post-update loss argmin") {
  Rng rng(34);
  for (int t = 0; t < 50; ++t) {
    const CalibrationSet cal = rng.calibration(4, 8, 2);
    const DenseMatrix w = rng.matrix(3, 4);
    const Hessian h = compute_hessian(cal, 0.0);
    std::size_t best_k = 0, best_q = 0;
    double best = INFINITY;
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t q = 0; q < 4; ++q) {
        const double s = obs_single_step(w, h, k, q).saliency;
        if (s < best) {
          best = s;
          best_k = k;
          best_q = q;
        }
      }
    const auto search = oracle::exhaustive_single_weight(w, cal);
    CHECK(search.with_update.row == best_k);
    CHECK(search.with_update.col == best_q);
  }
}

TEST_CASE("sparsegpt trivial cases and contracts") {
  Rng rng(35);
  const CalibrationSet cal = rng.calibration(8, 16, 2);
  const DenseMatrix w = rng.matrix(6, 8);
  SparseGptOptions opt;
  opt.target = SparsityTarget::unstructured(0.0);
  opt.block_size = 4;
  CHECK(prune_sparsegpt(w, cal, opt).pruned == w);

  opt.target = SparsityTarget::unstructured(0.5);
  const PruneOutcome o = prune_sparsegpt(w, cal, opt);
  CHECK(o.mask.popcount() == 24);
  CHECK(zero_exactly_on_mask(o));
  CHECK(o.loss_after <= o.loss_before + 1e-9);

  opt.target = SparsityTarget::nm(2, 4);
  const PruneOutcome nm = prune_sparsegpt(w, cal, opt);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t g = 0; g < 2; ++g) CHECK(nm.mask.slice_cols(4 * g, 4).row_count(i) == 2);
  CHECK(zero_exactly_on_mask(nm));

  opt.target = SparsityTarget::unstructured(0.5);
  opt.mask_block_size = 3;
  CHECK_THROWS_AS(prune_sparsegpt(w, cal, opt), ConfigError);

  // single column: removal cannot be compensated
  const DenseMatrix one{{2}, {-3}, {1}, {5}};
  SparseGptOptions o1;
  o1.target = SparsityTarget::unstructured(0.5);
  o1.block_size = 1;
  const PruneOutcome single = prune_sparsegpt(one, CalibrationSet({DenseMatrix{{1, 2, 3}}}), o1);
  CHECK(single.pruned == DenseMatrix{{0}, {-3}, {0}, {5}});
}

TEST_CASE("sparsegpt first update equals obs single step") {
  Rng rng(36);
  for (int t = 0; t < 50; ++t) {
    const CalibrationSet cal = rng.calibration(8, 12, 2);
    const DenseMatrix w = rng.matrix(8, 8);
    SparseGptTrace trace;
    SparseGptOptions opt;
    opt.target = SparsityTarget::unstructured(0.5);
    opt.block_size = 8;
    opt.mask_block_size = 8;
    opt.trace = &trace;
    prune_sparsegpt(w, cal, opt);
    REQUIRE(trace.recorded);
    const Hessian win = window_of_full(cal, opt.lambda_rel, trace.col);
    const DenseMatrix tail = w.block(0, trace.col, 8, 8 - trace.col);
    const ObsStep step = obs_single_step(tail, win, trace.row, 0);
    for (std::size_t j = 0; j < step.row.size(); ++j) CHECK(std::abs(step.row[j] - trace.row_after[j]) < 1e-10);
    CHECK(testing::rel_diff(step.saliency, trace.saliency) < 1e-10);
  }
}

TEST_CASE("sparsegpt lazy batching matches unbatched processing") {
  Rng rng(37);
  for (int t = 0; t < 10; ++t) {
    const CalibrationSet cal = rng.calibration(12, 20, 2);
    const DenseMatrix w = rng.matrix(5, 12);
    SparseGptOptions a;
    a.target = SparsityTarget::nm(2, 4);
    a.block_size = 4;
    SparseGptOptions b = a;
    b.block_size = 12;
    const PruneOutcome x = prune_sparsegpt(w, cal, a), y = prune_sparsegpt(w, cal, b);
    CHECK(x.mask == y.mask);
    CHECK(max_abs_diff(x.pruned, y.pruned) < 1e-10);
  }
}
