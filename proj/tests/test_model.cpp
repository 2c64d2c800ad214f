#include <doctest.h>

#include <cmath>
#include <vector>

#include "dpsvd/error.hpp"
#include "dpsvd/model.hpp"

using namespace dpsvd;

TEST_SUITE("model") {

TEST_CASE("natural parameters are 1 mu^T + A V^T") {
  LowRankFit f;
  f.mu = Eigen::Vector2d(0.5, -1.0);
  f.A = Eigen::MatrixXd(3, 1);
  f.A << 1, 0, -2;
  f.V = Eigen::MatrixXd(2, 1);
  f.V << 0.3, 0.4;
  const Eigen::MatrixXd t = natural_parameters(f);
  CHECK(t(0, 0) == doctest::Approx(0.8));
  CHECK(t(1, 1) == doctest::Approx(-1.0));
  CHECK(t(2, 1) == doctest::Approx(-1.8));
}

TEST_CASE("log likelihood matches a hand computation") {
  Eigen::MatrixXd theta(2, 2);
  theta << 0.1, -0.5, 1.2, 0.0;
  Eigen::MatrixXd xs(2, 2);
  xs << 0, 3, 2, 1;
  const CountMatrix x = CountMatrix::from_dense(xs);
  double expect = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      expect += xs(i, j) * theta(i, j) - std::exp(theta(i, j)) -
                std::lgamma(xs(i, j) + 1.0);
  CHECK(log_likelihood(x, theta) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(log_likelihood(x.as_sparse(), theta) ==
        doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("mean matrix overflow is a numerical error") {
  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(2, 2);
  theta(1, 0) = 800.0;
  CHECK_THROWS_AS(mean_matrix(theta), Error);
}

TEST_CASE("sampling is reproducible and has the right mean") {
  const Eigen::MatrixXd lambda = Eigen::MatrixXd::Constant(200, 50, 2.5);
  const CountMatrix a = sample_counts(lambda, RngStream(4));
  const CountMatrix b = sample_counts(lambda, RngStream(4));
  CHECK(a == b);
  const double mean = a.row_sums().sum() / (200.0 * 50.0);
  CHECK(std::abs(mean - 2.5) < 5.0 * std::sqrt(2.5 / 10000.0));
  CHECK_FALSE(a == sample_counts(lambda, RngStream(5)));
}

TEST_CASE("pairwise sum is exact on integers and order fixed") {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v.data(), v.size()) == 500500.0);
  CHECK(pairwise_sum(v.data(), 0) == 0.0);
}

}  // TEST_SUITE
