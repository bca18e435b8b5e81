#include "doctest.h"

#include "blockprune/calibration.hpp"
#include "blockprune/error.hpp"
#include "test_support.hpp"

using namespace blockprune;
using testing::Rng;

TEST_CASE("calibration set rejects empty and ragged input") {
  CHECK_THROWS_AS(CalibrationSet({}), DataError);
  CHECK_THROWS_AS(CalibrationSet({DenseMatrix(2, 3), DenseMatrix(2, 4)}), DataError);
  const CalibrationSet cal({DenseMatrix(3, 5), DenseMatrix(3, 5)});
  CHECK(cal.count() == 2);
  CHECK(cal.features() == 3);
  CHECK(cal.tokens() == 5);
}

TEST_CASE("identity input gives H = 2I") {
  const CalibrationSet cal({DenseMatrix::identity(2)});
  const Hessian h = compute_hessian(cal, 0.0);
  CHECK(h.h == DenseMatrix{{2, 0}, {0, 2}});
  CHECK(h.hinv(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h.hinv(1, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h.hinv(0, 1) == 0.0);
  CHECK(h.lambda == 0.0);
}

TEST_CASE("rank-zero input without damping fails with a damping hint") {
  const CalibrationSet cal({DenseMatrix(3, 4)});
  try {
    compute_hessian(cal, 0.0);
    FAIL("expected NotPositiveDefinite");
  } catch (const NotPositiveDefinite& e) {
    CHECK(std::string(e.what()).find("damping") != std::string::npos);
  }
}

TEST_CASE("gram matches naive accumulation") {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const CalibrationSet cal = rng.calibration(4, 8, 2);
    CHECK(max_abs_diff(accumulate_gram(cal), testing::naive_gram(cal)) < 1e-12);
    const Hessian h = compute_hessian(cal, 0.0);
    CHECK(max_abs_diff(h.h, testing::naive_gram(cal)) < 1e-12);
  }
}

TEST_CASE("damping adds lambda_rel times the mean diagonal") {
  Rng rng(12);
  const CalibrationSet cal = rng.calibration(5, 9, 3);
  const DenseMatrix g = accumulate_gram(cal);
  double mean = 0.0;
  for (std::size_t i = 0; i < 5; ++i) mean += g(i, i) / 5.0;
  const Hessian h = compute_hessian(cal, 0.05);
  CHECK(h.lambda == doctest::Approx(0.05 * mean).epsilon(1e-14));
  for (std::size_t i = 0; i < 5; ++i) CHECK(h.h(i, i) == doctest::Approx(g(i, i) + h.lambda).epsilon(1e-14));
  CHECK(inf_norm(testing::difference(matmul(h.h, h.hinv), DenseMatrix::identity(5))) < 1e-8);
}

TEST_CASE("trailing windows") {
  Rng rng(13);
  const CalibrationSet cal = rng.calibration(6, 10, 2);
  CHECK(trailing_hessian(cal, 0) .h == compute_hessian(cal).h);
  CHECK(trailing_hessian(cal, 0).hinv == compute_hessian(cal).hinv);

  const Hessian last = trailing_hessian(cal, 5, 0.0);
  double sq = 0.0;
  for (const auto& x : cal.samples())
    for (double v : x.row(5)) sq += v * v;
  REQUIRE(last.h.rows() == 1);
  CHECK(last.h(0, 0) == doctest::Approx(2.0 * sq / 2.0).epsilon(1e-13));
  const Hessian last_damped = trailing_hessian(cal, 5, 0.1);
  CHECK(last_damped.h(0, 0) == doctest::Approx(1.1 * last.h(0, 0)).epsilon(1e-13));

  for (std::size_t off = 0; off < 6; ++off) {
    const Hessian w = trailing_hessian(cal, off, 0.0);
    CHECK(max_abs_diff(w.h, compute_hessian(cal, 0.0).h.block(off, off, 6 - off, 6 - off)) < 1e-12);
  }
  CHECK_THROWS_AS(trailing_hessian(cal, 6), DimensionError);
}

TEST_CASE("row norms") {
  const CalibrationSet cal({DenseMatrix{{4, 3}, {0, 1}}});
  CHECK(row_norms(cal).values == std::vector<double>{5, 1});
  CHECK(row_norms(CalibrationSet({DenseMatrix(3, 2)})).values == std::vector<double>{0, 0, 0});

  Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    const CalibrationSet c = rng.calibration(5, 7, 3);
    const RowNorms n = row_norms(c);
    const Hessian h = compute_hessian(c, 0.0);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(n.values[i] - std::sqrt(h.h(i, i) / 2.0)) < 1e-12);
      CHECK(std::abs(h.h(i, i) - 2.0 * n.values[i] * n.values[i]) < 1e-12 * std::max(1.0, h.h(i, i)));
    }
    CHECK(n.tail(2).size() == 3);
  }
}

TEST_CASE("hessian ignores sample order") {
  Rng rng(15);
  for (int t = 0; t < 10; ++t) {
    const CalibrationSet cal = rng.calibration(5, 6, 4);
    std::vector<DenseMatrix> shuffled = cal.samples();
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    const Hessian a = compute_hessian(cal), b = compute_hessian(CalibrationSet(shuffled));
    CHECK(max_abs_diff(a.h, b.h) < 1e-12);
    CHECK(max_abs_diff(a.hinv, b.hinv) < 1e-12 * std::max(1.0, inf_norm(a.hinv)));
  }
}

TEST_CASE("reconstruction loss equals the direct loss") {
  Rng rng(16);
  for (int t = 0; t < 20; ++t) {
    const CalibrationSet cal = rng.calibration(6, 9, 3);
    const DenseMatrix delta = rng.matrix(4, 6);
    CHECK(testing::rel_diff(reconstruction_loss(delta, accumulate_gram(cal)), testing::naive_loss(delta, cal)) <
          1e-12);
  }
  CHECK(reconstruction_loss(DenseMatrix(2, 3), DenseMatrix::identity(3)) == 0.0);
}
