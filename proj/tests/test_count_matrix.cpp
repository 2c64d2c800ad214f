#include <doctest.h>

#include <cmath>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/error.hpp"

using namespace dpsvd;

namespace {

Eigen::MatrixXd sample_dense() {
  Eigen::MatrixXd m(3, 4);
  m << 0, 2, 0, 1,
       5, 0, 0, 0,
       0, 1, 3, 0;
  return m;
}

}  // namespace

TEST_SUITE("count_matrix") {

TEST_CASE("dense and sparse storage agree") {
  const CountMatrix d = CountMatrix::from_dense(sample_dense());
  const CountMatrix s = d.as_sparse();
  CHECK_FALSE(d.is_sparse());
  CHECK(s.is_sparse());
  CHECK(d == s);
  CHECK(s.nonzeros() == 5);
  CHECK(d.nonzeros() == 5);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) CHECK(d(i, j) == s(i, j));
  CHECK(d.row_sums().isApprox(s.row_sums()));
  CHECK(d.col_sums().isApprox(s.col_sums()));
  CHECK(s.to_dense() == sample_dense());
}

TEST_CASE("entries are column-major and duplicates sum") {
  const CountMatrix x =
      CountMatrix::from_entries(2, 2, {{1, 1, 2}, {0, 1, 1}, {1, 1, 3}});
  CHECK(x(1, 1) == 5.0);
  const auto e = x.entries();
  REQUIRE(e.size() == 2);
  CHECK(e[0].row == 0);
  CHECK(e[1].row == 1);
  CHECK(e[1].value == 5);
}

TEST_CASE("invalid cells are data errors") {
  Eigen::MatrixXd m = sample_dense();
  m(0, 0) = -1.0;
  CHECK_THROWS_AS(CountMatrix::from_dense(m), Error);
  m(0, 0) = 0.5;
  CHECK_THROWS_AS(CountMatrix::from_dense(m), Error);
  m(0, 0) = NAN;
  CHECK_THROWS_AS(CountMatrix::from_dense(m), Error);
  CHECK_THROWS_AS(CountMatrix::from_entries(2, 2, {{2, 0, 1}}), Error);
}

TEST_CASE("log factorial sum matches lgamma") {
  const CountMatrix x = CountMatrix::from_dense(sample_dense());
  double expect = 0.0;
  const Eigen::MatrixXd m = sample_dense();
  for (Eigen::Index i = 0; i < m.size(); ++i)
    expect += std::lgamma(m.data()[i] + 1.0);
  CHECK(x.log_factorial_sum() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(x.as_sparse().log_factorial_sum() ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("row and column selection") {
  const CountMatrix x = CountMatrix::from_dense(sample_dense());
  const CountMatrix r = x.select_rows({2, 0});
  CHECK(r.rows() == 2);
  CHECK(r(0, 2) == 3.0);
  CHECK(r(1, 1) == 2.0);
  const CountMatrix c = x.as_sparse().select_cols({3, 0});
  CHECK(c.cols() == 2);
  CHECK(c(0, 0) == 1.0);
  CHECK(c(1, 1) == 5.0);
}

}  // TEST_SUITE
