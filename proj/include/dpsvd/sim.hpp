#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpsvd/bootstrap.hpp"
#include "dpsvd/count_matrix.hpp"
#include "dpsvd/model.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/rng.hpp"
#include "dpsvd/simex.hpp"

namespace dpsvd {

struct Stages {
  bool psvd = true;
  bool ib = false;
  bool classical_bs = false;
  bool simex = false;
  bool firth = false;
};

// Space- or comma-separated stage names: psvd ib classical-bs simex firth.
Stages parse_stages(const std::string& text);
std::string to_string(const Stages& stages);

/// One simulation cell: mu_j ~ N(c, mu_variance), v_jl ~ N(loading_mean,
/// loading_variance), a_il ~ N(0, score_variances[l]).
struct ScenarioSpec {
  std::string id = "scenario";
  Eigen::Index n = 100;
  Eigen::Index d = 50;
  Eigen::Index k_true = 1;
  Eigen::Index k_fit = 1;
  double mu_center = -2.0;
  double mu_variance = 4.0;
  double loading_mean = 0.0;
  double loading_variance = 1.0;
  // Per component; missing entries default to 1.
  std::vector<double> score_variances{4.0};
  int replicates = 10;
  Stages stages;
  std::uint64_t seed = 1;
  int B = 10;
  int C = 5;
  int classical_B = 50;
  SimexSchedule simex;
  FitOptions fit;  // k and mu policy are overridden per replicate
};

void validate(const ScenarioSpec& spec);
// Canonical key = value text of every field; the spec hash is taken over it.
std::string canonical_text(const ScenarioSpec& spec);
std::uint64_t spec_hash(const ScenarioSpec& spec);

struct Dataset {
  CountMatrix counts;
  // Normalized (V^T V = I, A^T A diagonal) unless the truth is below rank.
  LowRankFit truth;
  Eigen::MatrixXd theta;
};

Dataset generate_dataset(const ScenarioSpec& spec, int replicate,
                         const RngStream& stream);

struct ResultRow {
  std::string scenario;
  std::uint64_t spec_hash = 0;
  std::uint64_t seed = 0;
  int replicate = 0;
  std::string stage;
  std::string metric;
  double value = 0.0;
};

using ResultTable = std::vector<ResultRow>;

/// Runs every replicate of one cell; rows are ordered by (replicate, stage,
/// metric emission order). Stage failures become a `failed` metric row.
ResultTable run_scenario(const ScenarioSpec& spec);
// Runs only the listed replicates (rows identical to the full run's).
ResultTable run_scenario(const ScenarioSpec& spec,
                         const std::vector<int>& replicates);

/// Parses a scenario config: `[scenario]` sections of `key = value` lines,
/// `#` comments. A comma-separated scalar value defines a grid axis; cells
/// are the Cartesian product in order of appearance.
std::vector<ScenarioSpec> parse_scenarios(const std::string& text);

}  // namespace dpsvd
