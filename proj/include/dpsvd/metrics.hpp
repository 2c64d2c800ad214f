#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace dpsvd {

struct MetricReport {
  std::string name;
  double value = 0.0;
  std::string scenario;
  int replicate = 0;
};

// tr(V_hat^T V_star) / sqrt(|V_hat|_F^2 |V_star|_F^2), in [-1, 1].
double loading_alignment(const Eigen::MatrixXd& V_hat,
                         const Eigen::MatrixXd& V_star);
// arccos of an alignment value, in degrees.
double alignment_degrees(double alignment);

// |est - truth|_F / sqrt(entries)
double rmse(const Eigen::MatrixXd& est, const Eigen::MatrixXd& truth);

// (before - after) / before * 100; negative means the error grew.
double rmse_reduction_pct(double before, double after);

// Mann-Whitney AUC of scores[positives] against scores[negatives], ties
// counted one half.
double forced_zero_auc(const Eigen::VectorXd& scores,
                       const std::vector<Eigen::Index>& positives,
                       const std::vector<Eigen::Index>& negatives);

struct TTest {
  double mean = 0.0;
  double t_statistic = 0.0;
  Eigen::Index count = 0;
};
// One-sample t statistic against zero.
TTest one_sample_t(const Eigen::VectorXd& values);

double median(std::vector<double> values);

}  // namespace dpsvd
