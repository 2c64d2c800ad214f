#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dpsvd {

/// Single-response Poisson regression with log link:
///   y_i ~ Poisson(exp(offset_i + x_i^T beta)),  i = 1..m.
/// Views are non-owning where the argument is an lvalue of matching type.
struct GlmProblem {
  Eigen::Ref<const Eigen::VectorXd> y;
  Eigen::Ref<const Eigen::MatrixXd> X;
  Eigen::Ref<const Eigen::VectorXd> offset;
};

struct SolverOptions {
  // Gradient tolerance, scaled by (1 + |X^T y|_inf). Convergence also needs
  // the Newton decrement g^T H^-1 g below tolerance^2 * max(1, |objective|).
  double tolerance = 1e-8;
  int max_iterations = 100;
  // Divergence: |X beta|_inf beyond this bound and still growing by at
  // least 0.5 per Newton step for 3 steps, or beyond it without convergence.
  double divergence_bound = 30.0;
  // Added to the diagonal when the information matrix is not positive definite.
  double ridge = 1e-8;
  int max_halvings = 60;
};

struct GlmSolution {
  Eigen::VectorXd beta;
  bool converged = false;
  bool diverged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  double gradient_tolerance = 0.0;
  double objective = 0.0;
  // Objective after the starting point and after every accepted step.
  std::vector<double> objective_trace;
};

// sum_i y_i eta_i - exp(eta_i), eta = offset + X beta (log(y!) omitted).
// With firth = true adds 0.5 log det(X^T W X); returns -inf if that
// determinant is not positive.
double poisson_objective(const GlmProblem& p, const Eigen::VectorXd& beta,
                         bool firth = false);
Eigen::VectorXd poisson_gradient(const GlmProblem& p,
                                 const Eigen::VectorXd& beta,
                                 bool firth = false);
// X^T W X with W = diag(exp(offset + X beta)).
Eigen::MatrixXd fisher_information(const GlmProblem& p,
                                   const Eigen::VectorXd& beta);

// Newton iterations with step-halving. An empty init starts from zero.
GlmSolution fit_mle(const GlmProblem& p, const SolverOptions& opts = {},
                    const Eigen::VectorXd& init = {});
// Maximizes the Jeffreys-penalized likelihood by Fisher scoring with
// step-halving. Requires X of full column rank.
GlmSolution fit_firth(const GlmProblem& p, const SolverOptions& opts = {},
                      const Eigen::VectorXd& init = {});

// (X^T W X)^-1 at beta.
Eigen::MatrixXd asymptotic_covariance(const GlmProblem& p,
                                      const Eigen::VectorXd& beta);

}  // namespace dpsvd
