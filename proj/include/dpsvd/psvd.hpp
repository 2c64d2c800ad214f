#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/glm.hpp"
#include "dpsvd/model.hpp"
#include "dpsvd/rng.hpp"

namespace dpsvd {

enum class MuPolicy { fixed, log_column_means, alternating };
enum class ScoreMethod { mle, firth };

struct FitOptions {
  Eigen::Index k = 1;
  MuPolicy mu_policy = MuPolicy::log_column_means;
  Eigen::VectorXd fixed_mu;  // used when mu_policy == fixed
  int max_sweeps = 200;
  // Stop once |l_s - l_{s-1}| / |l_{s-1}| falls below this.
  double sweep_tolerance = 1e-6;
  SolverOptions solver;
  // After each sweep, try steps of 1, 2, 4, ... up to this multiple of the
  // sweep's own change and keep the best if it raises the likelihood.
  bool extrapolate = true;
  // After each sweep, one damped Gauss-Newton step on (A, V) jointly when
  // d k <= max_joint_size; kept only if it raises the likelihood.
  bool joint_steps = true;
  Eigen::Index max_joint_size = 2000;
  double max_extrapolation = 1024.0;
  // Method for the final scoring pass after normalization. The alternating
  // sweeps themselves always maximize the plain likelihood.
  ScoreMethod score_method = ScoreMethod::mle;
  // Optional starting point (n x k, d x k); empty means the SVD start.
  Eigen::MatrixXd init_A;
  Eigen::MatrixXd init_V;
};

struct FitDiagnostics {
  int sweeps = 0;
  bool converged = false;
  // Full log-likelihood at the initial point and after every accepted sweep.
  std::vector<double> loglik_trace;
  // Regressions that hit the divergence bound in the final sweep.
  int diverged_rows = 0;
  int diverged_cols = 0;
  // False when A V^T was below rank k and only V could be orthonormalized.
  bool normalized = true;
};

struct FitResult {
  LowRankFit fit;
  FitDiagnostics diagnostics;
};

// mu_j = log((sum_i x_ij + 0.5) / n)
Eigen::VectorXd log_column_means(const CountMatrix& x);

/// Joint maximum likelihood by alternating row-wise score regressions and
/// column-wise loading regressions. Each block step is kept only if the full
/// log-likelihood does not decrease; the result is normalized.
FitResult fit(const CountMatrix& x, const FitOptions& opts,
              const RngStream& stream);

struct Factorization {
  Eigen::MatrixXd A;
  Eigen::MatrixXd V;
};

/// Rank-k SVD of A V^T = U S W^T, returned as V' = W, A' = U S with
/// components in decreasing singular value order. With a reference, each
/// component's sign makes v'_j . reference_j > 0; ties and the no-reference
/// case make the largest-magnitude entry of v'_j positive.
Factorization normalize_identifiable(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& V,
                                     const Eigen::MatrixXd& reference = {});

struct ScoreEstimates {
  Eigen::MatrixXd scores;  // rows x k
  std::vector<bool> diverged;
  std::vector<bool> converged;
};

// One Poisson regression per row with offset mu and design V.
ScoreEstimates estimate_scores(const CountMatrix& x_new,
                               const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& V, ScoreMethod method,
                               const SolverOptions& solver = {});

}  // namespace dpsvd
