#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/glm.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/rng.hpp"

namespace dpsvd {

/// Generic cohort preprocessing: keep the `top_columns` columns with the
/// largest support (rows with a positive count), pick `pick_columns` of them
/// at random, keep the `top_rows` most active rows over the picked columns
/// and split them at random into train and `test_rows` test rows.
struct CohortOptions {
  Eigen::Index top_columns = 486;
  Eigen::Index pick_columns = 50;
  Eigen::Index top_rows = 125;
  Eigen::Index test_rows = 25;
  std::uint64_t seed = 0;
};

struct Cohort {
  std::vector<Eigen::Index> columns;     // original column indices, ascending
  std::vector<Eigen::Index> train_rows;  // original row indices
  std::vector<Eigen::Index> test_rows;
  // Selected columns; train rows first, then test rows.
  CountMatrix counts = CountMatrix::zeros(1, 1);
};

Cohort select_cohort(const CountMatrix& x, const CohortOptions& opts);

/// Train/test rows of one count matrix plus, per test row, the forced-zero
/// columns (all originally positive) and their original counts.
struct EvalSplit {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  std::vector<std::vector<Eigen::Index>> forced;
  std::vector<std::vector<std::uint64_t>> original;
};

// Test rows are drawn among rows with at least `forced_per_row` positive
// cells and at least one zero; forced columns uniformly among positives.
EvalSplit make_split(const CountMatrix& x, Eigen::Index test_rows,
                     Eigen::Index forced_per_row, const RngStream& stream);
// Uses the given train/test rows (e.g. from a cohort).
EvalSplit make_split(const CountMatrix& x, std::vector<Eigen::Index> train,
                     std::vector<Eigen::Index> test,
                     Eigen::Index forced_per_row, const RngStream& stream);
void validate(const EvalSplit& split, const CountMatrix& x);

// Test rows with their forced columns set to zero.
CountMatrix forced_test_counts(const CountMatrix& x, const EvalSplit& split);

/// 1-based column indices by decreasing value; ties keep column order.
std::vector<Eigen::Index> rank_columns(const Eigen::VectorXd& lambda_row);

// exp(mu_j + a_i . v_j) for new rows, scores estimated with `method`.
Eigen::MatrixXd predict_means(const CountMatrix& x_new,
                              const Eigen::VectorXd& mu,
                              const Eigen::MatrixXd& V, ScoreMethod method,
                              const SolverOptions& solver = {});

enum class EvalMethod { constant, intercept, pca, psvd, debiased };
std::string to_string(EvalMethod m);
EvalMethod parse_eval_method(const std::string& name);

struct EvalOptions {
  std::vector<Eigen::Index> ks{1, 2, 3, 4, 5};
  std::vector<EvalMethod> methods{EvalMethod::constant, EvalMethod::intercept,
                                  EvalMethod::pca, EvalMethod::psvd,
                                  EvalMethod::debiased};
  // Test-row scoring for psvd and debiased.
  ScoreMethod score_method = ScoreMethod::firth;
  int B = 10;
  int C = 5;
  std::uint64_t seed = 0;
  FitOptions fit;  // k is set per entry of ks
};

struct EvalRow {
  std::string method;
  Eigen::Index k = 0;      // 0 for the rank-free baselines
  Eigen::Index row = -1;   // original row index; -1 for the mean
  double auc = 0.0;
};

/// Forced-zero AUC per test row and its mean, for every method and k.
/// Rank-free baselines (constant, intercept) are reported once with k = 0.
std::vector<EvalRow> evaluate(const CountMatrix& x, const EvalSplit& split,
                              const EvalOptions& opts);

// method,k,row,auc with row "mean" on summary lines.
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

}  // namespace dpsvd
