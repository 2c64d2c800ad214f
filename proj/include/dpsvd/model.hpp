#pragma once

#include <Eigen/Dense>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/rng.hpp"

namespace dpsvd {

/// Low-rank Poisson model: Theta = 1 mu^T + A V^T, Lambda = exp(Theta).
struct LowRankFit {
  Eigen::VectorXd mu;  // d main effects on the log scale
  Eigen::MatrixXd A;   // n x k scores
  Eigen::MatrixXd V;   // d x k loadings

  Eigen::Index rank() const { return V.cols(); }
  Eigen::Index rows() const { return A.rows(); }
  Eigen::Index cols() const { return V.rows(); }
};

// Shape and finiteness checks; throws on failure.
void validate(const LowRankFit& fit);

Eigen::MatrixXd natural_parameters(const LowRankFit& fit);

// Lambda = exp(Theta); throws a numerical error naming the first cell whose
// natural parameter overflows exp.
Eigen::MatrixXd mean_matrix(const LowRankFit& fit);
Eigen::MatrixXd mean_matrix(const Eigen::MatrixXd& theta);

// sum_ij x_ij theta_ij - exp(theta_ij) - log(x_ij!)
double log_likelihood(const CountMatrix& x, const LowRankFit& fit);
double log_likelihood(const CountMatrix& x, const Eigen::MatrixXd& theta);

// Independent Poisson draws, one per cell, in column-major order.
CountMatrix sample_counts(const Eigen::MatrixXd& lambda,
                          const RngStream& stream);

// Pairwise (cascade) summation; fixed reduction order.
double pairwise_sum(const double* values, std::size_t n);
inline double pairwise_sum(const Eigen::VectorXd& v) {
  return pairwise_sum(v.data(), static_cast<std::size_t>(v.size()));
}

}  // namespace dpsvd
