#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpsvd/count_matrix.hpp"
#include "dpsvd/model.hpp"
#include "dpsvd/parallel.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/rng.hpp"

namespace dpsvd {

enum class BootstrapMode { classical, iterative };

struct BootstrapConfig {
  // Level-1 replicates; in classical mode this is the total replicate count.
  int B = 10;
  // Level-2 replicates per level-1 replicate (iterative mode only).
  int C = 5;
  std::uint64_t seed = 0;
  BootstrapMode mode = BootstrapMode::iterative;
  // The correction is refused when more replicates than this fail.
  double max_failed_fraction = 0.2;
  // A refit with more diverged column regressions than this counts as failed.
  double max_diverged_col_fraction = 0.05;
};

void validate(const BootstrapConfig& cfg);

template <class Model>
struct Replicate {
  std::optional<Model> model;
  std::string failure;
};

template <class Model>
struct NestedDraws {
  std::vector<Replicate<Model>> level1;               // B
  std::vector<std::vector<Replicate<Model>>> level2;  // B x C, empty if skipped
};

/// Parametric nested bootstrap. refit(generator, stream) simulates one data
/// set from `generator`, re-estimates and returns the refitted model.
/// Level-1 draws use stream (0, b) and level-2 draws use (1, b, c), so the
/// outcome is independent of the work schedule.
template <class Model, class Refit>
NestedDraws<Model> run_nested_bootstrap(const Model& fitted, Refit&& refit,
                                        int B, int C,
                                        const RngStream& stream) {
  NestedDraws<Model> draws;
  draws.level1.resize(static_cast<std::size_t>(B));
  parallel_for(draws.level1.size(), [&](std::size_t b) {
    draws.level1[b] = refit(fitted, stream.child(0).child(b));
  });
  draws.level2.resize(static_cast<std::size_t>(B));
  if (C <= 0) return draws;
  const auto jobs = static_cast<std::size_t>(B) * static_cast<std::size_t>(C);
  std::vector<Replicate<Model>> flat(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t b = job / static_cast<std::size_t>(C);
    const std::size_t c = job % static_cast<std::size_t>(C);
    if (!draws.level1[b].model) {
      flat[job].failure = "skipped: level-1 replicate failed";
      return;
    }
    flat[job] = refit(*draws.level1[b].model,
                      stream.child(1).child(b).child(c));
  });
  for (std::size_t b = 0; b < draws.level2.size(); ++b) {
    if (!draws.level1[b].model) continue;
    for (std::size_t c = 0; c < static_cast<std::size_t>(C); ++c)
      draws.level2[b].push_back(
          std::move(flat[b * static_cast<std::size_t>(C) + c]));
  }
  return draws;
}

// Plain mean in index order.
template <class Param>
Param ordered_mean(const std::vector<Param>& values) {
  Param sum = values.front();
  for (std::size_t i = 1; i < values.size(); ++i) sum = sum + values[i];
  return sum * (1.0 / static_cast<double>(values.size()));
}

/// 3 est - 3 mean(level1) + mean(level2)
template <class Param>
Param iterative_combine(const Param& estimate,
                        const std::vector<Param>& level1,
                        const std::vector<Param>& level2) {
  return estimate * 3.0 - ordered_mean(level1) * 3.0 + ordered_mean(level2);
}

/// 2 est - mean(level1)
template <class Param>
Param classical_combine(const Param& estimate,
                        const std::vector<Param>& level1) {
  return estimate * 2.0 - ordered_mean(level1);
}

struct DebiasResult {
  Eigen::MatrixXd V_tilde;
  // Normalized, sign-aligned replicate loadings; nullopt for failures.
  std::vector<std::optional<Eigen::MatrixXd>> level1;
  // Flattened b * C + c; empty in classical mode.
  std::vector<std::optional<Eigen::MatrixXd>> level2;
  int succeeded_level1 = 0;
  int failed_level1 = 0;
  int succeeded_level2 = 0;
  int failed_level2 = 0;  // includes level-2 jobs skipped after a level-1 failure
  std::vector<std::string> failures;
};

/// Nested parametric bootstrap correction of the loadings of a normalized
/// fit. Main effects stay at fit.mu in every replicate; replicate scores are
/// refit but only enter through the level-2 generating means.
DebiasResult iterative_bootstrap_debias(const CountMatrix& x,
                                        const LowRankFit& fit,
                                        const BootstrapConfig& cfg,
                                        const FitOptions& opts);

/// Single-level parametric bootstrap correction 2 V - mean(V_b).
DebiasResult classical_bootstrap_debias(const CountMatrix& x,
                                        const LowRankFit& fit,
                                        const BootstrapConfig& cfg,
                                        const FitOptions& opts);

}  // namespace dpsvd
