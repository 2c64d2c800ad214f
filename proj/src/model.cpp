#include "dpsvd/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "dpsvd/error.hpp"

namespace dpsvd {

namespace {

const double kMaxTheta = std::log(std::numeric_limits<double>::max());

}  // namespace

double pairwise_sum(const double* values, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += values[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

void validate(const LowRankFit& fit) {
  const auto d = fit.mu.size();
  if (fit.V.rows() != d)
    data_error("loadings rows do not match the number of main effects");
  if (fit.A.cols() != fit.V.cols())
    data_error("scores and loadings disagree on the rank");
  if (fit.V.cols() < 1 || fit.V.cols() >= d)
    data_error("rank k must satisfy 1 <= k < d");
  if (!fit.mu.allFinite() || !fit.A.allFinite() || !fit.V.allFinite())
    numerical_error("low-rank fit has non-finite parameters");
}

Eigen::MatrixXd natural_parameters(const LowRankFit& fit) {
  Eigen::MatrixXd theta = fit.A * fit.V.transpose();
  theta.rowwise() += fit.mu.transpose();
  return theta;
}

Eigen::MatrixXd mean_matrix(const Eigen::MatrixXd& theta) {
  for (Eigen::Index j = 0; j < theta.cols(); ++j) {
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      const double t = theta(i, j);
      if (!(t <= kMaxTheta)) {
        std::ostringstream os;
        os << "natural parameter at cell (" << i << ", " << j << ") = " << t
           << " overflows exp";
        numerical_error(os.str());
      }
    }
  }
  return theta.array().exp().matrix();
}

Eigen::MatrixXd mean_matrix(const LowRankFit& fit) {
  return mean_matrix(natural_parameters(fit));
}

double log_likelihood(const CountMatrix& x, const Eigen::MatrixXd& theta) {
  if (x.rows() != theta.rows() || x.cols() != theta.cols()) {
    std::ostringstream os;
    os << "dimension mismatch: counts are " << x.rows() << "x" << x.cols()
       << ", parameters are " << theta.rows() << "x" << theta.cols();
    data_error(os.str());
  }
  const Eigen::MatrixXd xd = x.to_dense();
  Eigen::VectorXd row_terms(theta.rows());
  Eigen::VectorXd cell(theta.cols());
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    for (Eigen::Index j = 0; j < theta.cols(); ++j) {
      const double xv = xd(i, j);
      const double t = theta(i, j);
      cell[j] = (xv != 0.0 ? xv * t - std::lgamma(xv + 1.0) : 0.0) -
                std::exp(t);
    }
    row_terms[i] = pairwise_sum(cell);
  }
  return pairwise_sum(row_terms);
}

double log_likelihood(const CountMatrix& x, const LowRankFit& fit) {
  if (x.rows() != fit.rows() || x.cols() != fit.cols()) {
    std::ostringstream os;
    os << "dimension mismatch: counts are " << x.rows() << "x" << x.cols()
       << ", fit is " << fit.rows() << "x" << fit.cols();
    data_error(os.str());
  }
  return log_likelihood(x, natural_parameters(fit));
}

CountMatrix sample_counts(const Eigen::MatrixXd& lambda,
                          const RngStream& stream) {
  if (!lambda.allFinite())
    numerical_error("sample_counts: non-finite Poisson mean");
  if ((lambda.array() < 0.0).any())
    numerical_error("sample_counts: negative Poisson mean");
  Rng rng(stream);
  Eigen::MatrixXd out(lambda.rows(), lambda.cols());
  for (Eigen::Index j = 0; j < lambda.cols(); ++j)
    for (Eigen::Index i = 0; i < lambda.rows(); ++i)
      out(i, j) = static_cast<double>(rng.poisson(lambda(i, j)));
  return CountMatrix::from_dense(std::move(out));
}

}  // namespace dpsvd
