#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/glm.hpp"
#include "dpsvd/model.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/rng.hpp"

namespace dpsvd {

enum class SigmaSource { asymptotic_average, user_supplied };

/// Classical additive error on loadings: v_hat_ij = v_ij + e_ij,
/// e_ij ~ N(0, sigma2), common to all entries.
struct MeasurementErrorModel {
  double sigma2 = 0.0;
  SigmaSource source = SigmaSource::user_supplied;
  // Loading rows whose information matrix was singular and were left out.
  int skipped_rows = 0;
};

enum class Extrapolant { quadratic, linear };

struct SimexSchedule {
  std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 2.0};
  int replicates = 100;
  Extrapolant extrapolant = Extrapolant::quadratic;
};

void validate(const SimexSchedule& sched);

/// Mean of diag((A^T W_i A)^-1) over all loading rows i, with
/// W_i = diag(exp(mu_i + A v_i)).
MeasurementErrorModel estimate_sigma2(const LowRankFit& fit);

/// Fits the extrapolant to values[g, :] over grid[g] by least squares and
/// evaluates it at lambda = -1. The fit is done on differences from the
/// first grid row, so a constant column is returned exactly.
Eigen::VectorXd simex_extrapolate(const std::vector<double>& grid,
                                  const Eigen::MatrixXd& values,
                                  Extrapolant extrapolant);

struct SimexResult {
  Eigen::MatrixXd scores;  // n x k extrapolated (or naive on fallback)
  Eigen::MatrixXd naive;
  // Row kept its naive score because some grid-point fit diverged.
  std::vector<bool> fallback;
  // Per grid point: mean and variance over replicates of the row scores.
  std::vector<Eigen::MatrixXd> grid_means;
  std::vector<Eigen::MatrixXd> grid_variances;
};

/// SIMEX score estimation. For every grid value lambda_g > 0 and replicate r
/// the loadings are contaminated once, V + sqrt(lambda_g) sigma Z_gr, and
/// shared by all rows; stream (g, r) drives Z_gr.
SimexResult simex_scores(const CountMatrix& x_new, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& V,
                         const MeasurementErrorModel& me,
                         const SimexSchedule& sched, const RngStream& stream,
                         ScoreMethod method = ScoreMethod::mle,
                         const SolverOptions& solver = {});

}  // namespace dpsvd
