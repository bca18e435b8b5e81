#include "doctest.h"

#include "blockprune/error.hpp"
#include "blockprune/oracle.hpp"
#include "blockprune/thanos.hpp"
#include "test_support.hpp"

using namespace blockprune;
using testing::Rng;

TEST_CASE("loss_eval examples") {
  Rng rng(61);
  const CalibrationSet cal = rng.calibration(4, 6, 2);
  CHECK(oracle::loss_eval(DenseMatrix(3, 4), cal) == 0.0);

  const CalibrationSet id({DenseMatrix::identity(3)});
  const DenseMatrix outer{{2, -1, 0}, {4, -2, 0}};
  CHECK(oracle::loss_eval(outer, id) == frobenius_norm_sq(outer));

  for (int t = 0; t < 10; ++t) {
    const DenseMatrix d = rng.matrix(3, 4);
    CHECK(testing::rel_diff(oracle::loss_eval(d, cal), testing::naive_loss(d, cal)) < 1e-12);
  }
  CHECK_THROWS_AS(oracle::loss_eval(DenseMatrix(1, 3), cal), DimensionError);
}

TEST_CASE("constrained_lsq trivial cases") {
  Rng rng(62);
  const CalibrationSet cal = rng.calibration(4, 8);
  const std::vector<double> w{1, -2, 3, 0.5};
  CHECK(oracle::constrained_lsq(w, IndexSet({0, 1, 2, 3}, 4), cal) == std::vector<double>{-1, 2, -3, -0.5});

  const CalibrationSet diag({DenseMatrix{{1, 0, 0, 0}, {0, 2, 0, 0}, {0, 0, 3, 0}, {0, 0, 0, 1}}});
  const auto d = oracle::constrained_lsq(w, IndexSet({2}, 4), diag);
  CHECK(d == std::vector<double>{0, 0, -3, 0});

  const CalibrationSet degenerate({DenseMatrix{{1, 1}, {1, 1}, {0, 1}}});
  CHECK_THROWS_AS(oracle::constrained_lsq(std::vector<double>{1, 2, 3}, IndexSet({2}, 3), degenerate),
                  NumericalError);
}

TEST_CASE("constrained_lsq is a global minimum over feasible perturbations") {
  Rng rng(63);
  for (int t = 0; t < 20; ++t) {
    const CalibrationSet cal = rng.calibration(6, 10, 2);
    const DenseMatrix w = rng.matrix(1, 6);
    const IndexSet q(rng.subset(6, rng.index(1, 5)), 6);
    const auto delta = oracle::constrained_lsq(w.row(0), q, cal);
    for (auto j : q) CHECK(delta[j] == -w(0, j));
    const double best = testing::naive_loss(DenseMatrix(1, 6, delta), cal);
    for (int k = 0; k < 100; ++k) {
      std::vector<double> alt = delta;
      for (std::size_t j = 0; j < 6; ++j)
        if (std::find(q.begin(), q.end(), j) == q.end()) alt[j] += 0.1 * rng.normal();
      CHECK(testing::naive_loss(DenseMatrix(1, 6, alt), cal) >= best - 1e-10);
    }
  }
}

TEST_CASE("exhaustive single weight search") {
  const CalibrationSet ex({DenseMatrix{{4, 3}, {0, 1}}});
  const DenseMatrix w{{3, -2}, {-2, 4}, {1, -6}};
  const auto s = oracle::exhaustive_single_weight(w, ex);
  CHECK(s.without_update.row == 0);
  CHECK(s.without_update.col == 1);
  CHECK(s.without_update.loss == doctest::Approx(4.0));

  Rng rng(64);
  for (int t = 0; t < 20; ++t) {
    const CalibrationSet cal = rng.calibration(4, 8, 2);
    DenseMatrix wr = rng.matrix(4, 4);
    const std::size_t hk = rng.index(0, 3), hq = rng.index(0, 3);
    wr(hk, hq) = 1e6;
    const auto r = oracle::exhaustive_single_weight(wr, cal);
    CHECK_FALSE((r.without_update.row == hk && r.without_update.col == hq));
    CHECK_FALSE((r.with_update.row == hk && r.with_update.col == hq));
    CHECK(r.with_update.loss <= r.without_update.loss + 1e-12);

    const auto n = testing::naive_norms(cal);
    double min_sq = INFINITY;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) min_sq = std::min(min_sq, std::pow(std::abs(wr(i, j)) * n[j], 2));
    CHECK(testing::rel_diff(r.without_update.loss, min_sq) < 1e-12);
  }
}

TEST_CASE("exhaustive mask search") {
  Rng rng(65);
  const CalibrationSet cal = rng.calibration(3, 8);
  const DenseMatrix w = rng.matrix(2, 3);

  const auto none = oracle::exhaustive_mask_search(w, cal, 0);
  CHECK(none.mask.popcount() == 0);
  CHECK(none.loss == 0.0);

  const auto all = oracle::exhaustive_mask_search(w, cal, 6);
  CHECK(all.mask.popcount() == 6);
  CHECK(testing::rel_diff(all.loss, testing::naive_loss(w, cal)) < 1e-12);

  CHECK_THROWS_AS(oracle::exhaustive_mask_search(rng.matrix(8, 3), cal, 12), ConfigError);
}

TEST_CASE("thanos never beats the best mask of the same size") {
  Rng rng(66);
  for (int t = 0; t < 20; ++t) {
    const CalibrationSet cal = rng.calibration(3, 8);
    const DenseMatrix w = rng.matrix(2, 3);
    const auto best = oracle::exhaustive_mask_search(w, cal, 2);
    ThanosConfig cfg;
    cfg.sparsity = 2.0 / 6.0;
    cfg.lambda_rel = 0.0;
    const PruneOutcome out = prune_thanos_unstructured(w, cal, cfg);
    REQUIRE(out.mask.popcount() == 2);
    const double realized = oracle::loss_eval(testing::difference(out.pruned, w), cal);
    CHECK(realized >= best.loss * (1 - 1e-9));
    MESSAGE("gap to the best mask: " << realized - best.loss);
  }
}
