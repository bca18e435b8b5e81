#include "doctest.h"

#include "blockprune/error.hpp"
#include "blockprune/masks.hpp"
#include "test_support.hpp"

using namespace blockprune;
using testing::Rng;

namespace {

const DenseMatrix kW{{3, -2}, {-2, 4}, {1, -6}};
const std::vector<double> kNorms{5, 1};

PruneMask mask_of(std::size_t r, std::size_t c, std::initializer_list<std::pair<std::size_t, std::size_t>> on) {
  PruneMask m(r, c);
  for (auto [i, j] : on) m.set(i, j);
  return m;
}

std::vector<std::size_t> as_vector(const IndexSet& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("worked example saliency grid") {
  CHECK(saliency(kW, kNorms) == DenseMatrix{{15, 2}, {10, 4}, {5, 6}});
  CHECK(saliency(DenseMatrix(3, 2), kNorms) == DenseMatrix(3, 2));
  CHECK_THROWS_AS(saliency(kW, std::vector<double>{1, 2, 3}), DimensionError);

  Rng rng(21);
  const DenseMatrix w = rng.matrix(5, 7);
  std::vector<double> n(7);
  for (double& v : n) v = std::abs(rng.normal());
  CHECK(saliency(w, n) == testing::abs_scores(w, n));
}

TEST_CASE("worked example psi masks") {
  CHECK(psi_select(kW, kNorms, 0) == PruneMask(3, 2));
  CHECK(psi_select(kW, kNorms, 1) == mask_of(3, 2, {{0, 1}}));
  CHECK(psi_select(kW, kNorms, 2) == mask_of(3, 2, {{0, 1}, {1, 1}}));
  CHECK(psi_select(kW, kNorms, 4) == mask_of(3, 2, {{0, 1}, {1, 1}, {2, 0}, {2, 1}}));
  CHECK_THROWS_AS(psi_select(kW, kNorms, 7), ConfigError);
}

TEST_CASE("phi examples") {
  const std::vector<std::uint8_t> a{1, 0, 0, 1, 1}, b{0, 0, 1, 1, 0}, none{0, 0, 0};
  CHECK(as_vector(phi_indices(a)) == std::vector<std::size_t>{0, 3, 4});
  CHECK(as_vector(phi_indices(b)) == std::vector<std::size_t>{2, 3});
  CHECK(phi_indices(none).empty());
}

TEST_CASE("phi inverts mask row construction") {
  Rng rng(22);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = rng.index(1, 20);
    const IndexSet s(rng.subset(n, rng.index(0, n)), n);
    std::vector<std::uint8_t> row(n, 0);
    for (auto j : s) row[j] = 1;
    CHECK(phi_indices(row) == s);
  }
}

TEST_CASE("index sets must be strictly increasing") {
  CHECK_THROWS_AS(IndexSet({1, 1}, 3), ConfigError);
  CHECK_THROWS_AS(IndexSet({2, 1}, 3), ConfigError);
  CHECK_THROWS_AS(IndexSet({3}, 3), ConfigError);
}

TEST_CASE("counting helpers") {
  CHECK(floor_count(0.29, 100) == 29);
  CHECK(floor_count(0.5, 7) == 3);
  CHECK(floor_count(0.0, 10) == 0);
  CHECK(ceil_count(6.4) == 7);
  CHECK(ceil_count(0.1 * 30) == 3);
  CHECK(ceil_count(0.0) == 0);
  CHECK_THROWS_AS(check_fraction(1.0, "p"), ConfigError);
  CHECK_THROWS_AS(check_fraction(-0.1, "p"), ConfigError);
  CHECK_NOTHROW(check_fraction(0.0, "p"));
}

TEST_CASE("psi selection properties") {
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const std::size_t c = rng.index(1, 6), b = rng.index(1, 9);
    const DenseMatrix w = rng.matrix(c, b);
    std::vector<double> n(b);
    for (double& v : n) v = rng.uniform(0.1, 3.0);
    const std::size_t r = rng.index(0, c * b);
    const PruneMask m = psi_select(w, n, r);
    CHECK(m.popcount() == r);

    const DenseMatrix s = saliency(w, n);
    double max_in = -1.0, min_out = INFINITY;
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        if (m.test(i, j)) {
          max_in = std::max(max_in, s(i, j));
        } else {
          min_out = std::min(min_out, s(i, j));
        }
      }
    CHECK(max_in <= min_out);
    CHECK(m == testing::sort_oracle_mask(s, r));

    DenseMatrix scaled = w;
    for (double& v : scaled.values()) v *= 3.7;
    CHECK(psi_select(scaled, n, r) == m);

    const std::vector<double> ones(b, 1.0);
    const double p = static_cast<double>(r) / static_cast<double>(c * b);
    if (r < c * b && floor_count(p, c * b) == r) CHECK(psi_select(w, ones, r) == magnitude_mask(w, p));
  }
}

TEST_CASE("ties go to the lower row-major index") {
  const DenseMatrix w(2, 3, 1.0);
  const std::vector<double> n(3, 1.0);
  CHECK(psi_select(w, n, 4) == mask_of(2, 3, {{0, 0}, {0, 1}, {0, 2}, {1, 0}}));
  CHECK(wanda_rowwise_mask(DenseMatrix(1, 4, 2.0), std::vector<double>(4, 1.0), 0.5) == mask_of(1, 4, {{0, 0}, {0, 1}}));
}

TEST_CASE("n:m masks") {
  CHECK(nm_mask(DenseMatrix{{1, 2, 3, 4}}, std::vector<double>(4, 1.0), 2, 4) == mask_of(1, 4, {{0, 0}, {0, 1}}));
  CHECK(nm_mask(DenseMatrix(1, 4, 5.0), std::vector<double>(4, 1.0), 2, 4) == mask_of(1, 4, {{0, 0}, {0, 1}}));
  CHECK_THROWS_AS(nm_mask(DenseMatrix(1, 4), std::vector<double>(4, 1.0), 4, 4), ConfigError);
  CHECK_THROWS_AS(nm_mask(DenseMatrix(1, 4), std::vector<double>(4, 1.0), 0, 4), ConfigError);

  Rng rng(24);
  for (int t = 0; t < 50; ++t) {
    for (auto [n, m] : {std::pair<std::size_t, std::size_t>{2, 4}, {4, 8}, {1, 3}}) {
      const DenseMatrix w = rng.matrix(4, 2 * m);
      std::vector<double> norms(2 * m);
      for (double& v : norms) v = rng.uniform(0.1, 2.0);
      const PruneMask mask = nm_mask(w, norms, n, m);
      const DenseMatrix s = saliency(w, norms);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t g = 0; g < 2; ++g) {
          const PruneMask expect = testing::sort_oracle_rowwise(s.block(i, g * m, 1, m), n);
          const PruneMask got = mask.slice_cols(g * m, m);
          for (std::size_t j = 0; j < m; ++j) CHECK(got.test(i, j) == expect.test(0, j));
          CHECK(got.row_count(i) == n);
        }
    }
  }
}

TEST_CASE("n:m ragged tail takes floor(n*m'/m)") {
  const DenseMatrix w{{1, 2, 3, 4, 5, 6, 7}};
  const PruneMask m = nm_mask(w, std::vector<double>(7, 1.0), 2, 4);
  CHECK(m == mask_of(1, 7, {{0, 0}, {0, 1}, {0, 4}}));
  const PruneMask tiny = nm_mask(DenseMatrix{{1, 2, 3, 4, 5}}, std::vector<double>(5, 1.0), 2, 4);
  CHECK(tiny.popcount() == 2);
}

TEST_CASE("magnitude mask") {
  CHECK(magnitude_mask(kW, 0.0) == PruneMask(3, 2));
  CHECK(magnitude_mask(DenseMatrix{{1, -5}, {2, -3}}, 0.5) == mask_of(2, 2, {{0, 0}, {1, 0}}));
  Rng rng(25);
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix w = rng.matrix(6, 6);
    const PruneMask m = magnitude_mask(w, 0.5);
    CHECK(m.popcount() == 18);
    CHECK(m == testing::sort_oracle_mask(testing::abs_scores(w, std::vector<double>(6, 1.0)), 18));
  }
}

TEST_CASE("wanda row-wise mask") {
  CHECK(wanda_rowwise_mask(kW, kNorms, 0.5) == mask_of(3, 2, {{0, 1}, {1, 1}, {2, 0}}));
  CHECK(wanda_rowwise_mask(kW, kNorms, 0.0) == PruneMask(3, 2));
  Rng rng(26);
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix w = rng.matrix(5, 9);
    std::vector<double> n(9);
    for (double& v : n) v = rng.uniform(0.1, 2.0);
    for (double p : {0.1, 0.3, 0.5, 0.9}) {
      CHECK(wanda_rowwise_mask(w, n, p) == testing::sort_oracle_rowwise(testing::abs_scores(w, n), floor_count(p, 9)));
    }
  }
}

TEST_CASE("mask paste and slice") {
  PruneMask big(3, 4);
  big.paste(mask_of(2, 2, {{0, 1}, {1, 0}}), 1, 2);
  CHECK(big == mask_of(3, 4, {{1, 3}, {2, 2}}));
  CHECK(big.slice_cols(2, 2) == mask_of(3, 2, {{1, 1}, {2, 0}}));
  CHECK_THROWS_AS(big.paste(PruneMask(2, 2), 2, 0), DimensionError);
  CHECK_THROWS_AS(big.slice_cols(3, 2), DimensionError);
}
