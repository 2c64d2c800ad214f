#include "dpsvd/simex.hpp"

#include <cmath>
#include <sstream>

#include "dpsvd/error.hpp"
#include "dpsvd/parallel.hpp"

namespace dpsvd {

void validate(const SimexSchedule& sched) {
  const auto& g = sched.grid;
  if (g.empty() || g.front() != 0.0)
    usage_error("simex: grid must start at 0");
  for (std::size_t i = 1; i < g.size(); ++i)
    if (!(g[i] > g[i - 1])) usage_error("simex: grid must be increasing");
  const std::size_t needed =
      sched.extrapolant == Extrapolant::quadratic ? 3 : 2;
  if (g.size() < needed) usage_error("simex: grid too short for extrapolant");
  if (sched.replicates < 2) usage_error("simex: need at least 2 replicates");
}

MeasurementErrorModel estimate_sigma2(const LowRankFit& fit) {
  validate(fit);
  const auto n = fit.rows();
  const auto d = fit.cols();
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  std::vector<double> row_sums(static_cast<std::size_t>(d), 0.0);
  std::vector<char> ok(static_cast<std::size_t>(d), 0);
  parallel_for(static_cast<std::size_t>(d), [&](std::size_t r) {
    const auto i = static_cast<Eigen::Index>(r);
    const Eigen::VectorXd offset = Eigen::VectorXd::Constant(n, fit.mu[i]);
    try {
      const Eigen::MatrixXd cov = asymptotic_covariance(
          {y, fit.A, offset}, fit.V.row(i).transpose());
      row_sums[r] = cov.diagonal().sum();
      ok[r] = 1;
    } catch (const Error&) {
    }
  });

  MeasurementErrorModel me;
  me.source = SigmaSource::asymptotic_average;
  double total = 0.0;
  Eigen::Index used = 0;
  for (std::size_t r = 0; r < row_sums.size(); ++r) {
    if (ok[r]) {
      total += row_sums[r];
      ++used;
    } else {
      ++me.skipped_rows;
    }
  }
  if (used == 0)
    numerical_error("estimate_sigma2: information singular for every row");
  me.sigma2 = total / static_cast<double>(used * fit.rank());
  return me;
}

Eigen::VectorXd simex_extrapolate(const std::vector<double>& grid,
                                  const Eigen::MatrixXd& values,
                                  Extrapolant extrapolant) {
  const auto G = static_cast<Eigen::Index>(grid.size());
  if (values.rows() != G) data_error("simex: one value row per grid point");
  const Eigen::Index terms = extrapolant == Extrapolant::quadratic ? 3 : 2;
  if (G < terms) data_error("simex: grid too short for extrapolant");

  Eigen::MatrixXd design(G, terms);
  for (Eigen::Index g = 0; g < G; ++g) {
    const double l = grid[static_cast<std::size_t>(g)];
    design(g, 0) = 1.0;
    design(g, 1) = l;
    if (terms == 3) design(g, 2) = l * l;
  }
  const Eigen::MatrixXd diffs = values.rowwise() - values.row(0);
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(diffs);
  Eigen::RowVectorXd at(terms);
  at << 1.0, -1.0;
  if (terms == 3) at[2] = 1.0;
  return (values.row(0) + at * coef).transpose();
}

SimexResult simex_scores(const CountMatrix& x_new, const Eigen::VectorXd& mu,
                         const Eigen::MatrixXd& V,
                         const MeasurementErrorModel& me,
                         const SimexSchedule& sched, const RngStream& stream,
                         ScoreMethod method, const SolverOptions& solver) {
  validate(sched);
  if (!std::isfinite(me.sigma2) || me.sigma2 < 0.0)
    usage_error("simex: sigma2 must be finite and nonnegative");

  SimexResult out;
  const ScoreEstimates naive = estimate_scores(x_new, mu, V, method, solver);
  out.naive = naive.scores;
  const auto n = x_new.rows();
  const auto k = V.cols();
  const auto G = sched.grid.size();
  const auto R = static_cast<std::size_t>(sched.replicates);
  out.fallback.assign(naive.diverged.begin(), naive.diverged.end());
  out.grid_means.assign(G, out.naive);
  out.grid_variances.assign(G, Eigen::MatrixXd::Zero(n, k));

  if (me.sigma2 == 0.0) {
    out.scores = out.naive;
    return out;
  }

  const Eigen::MatrixXd x = x_new.to_dense();
  const double sigma = std::sqrt(me.sigma2);
  // Jobs (g, r) for g >= 1; each writes its own score matrix.
  const std::size_t jobs = (G - 1) * R;
  std::vector<Eigen::MatrixXd> est(jobs);
  std::vector<std::vector<char>> div(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t g = 1 + job / R;
    const std::size_t r = job % R;
    Rng rng(stream.child(g).child(r));
    Eigen::MatrixXd Vc = V;
    const double scale = std::sqrt(sched.grid[g]) * sigma;
    for (Eigen::Index c = 0; c < Vc.cols(); ++c)
      for (Eigen::Index i = 0; i < Vc.rows(); ++i)
        Vc(i, c) += scale * rng.normal();
    est[job].resize(n, k);
    div[job].assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd y = x.row(i).transpose();
      const Eigen::VectorXd init =
          naive.diverged[static_cast<std::size_t>(i)]
              ? Eigen::VectorXd::Zero(k)
              : Eigen::VectorXd(out.naive.row(i).transpose());
      try {
        const GlmSolution s = method == ScoreMethod::firth
                                  ? fit_firth({y, Vc, mu}, solver, init)
                                  : fit_mle({y, Vc, mu}, solver, init);
        est[job].row(i) = s.beta.transpose();
        div[job][static_cast<std::size_t>(i)] = s.diverged;
      } catch (const Error&) {
        est[job].row(i) = init.transpose();
        div[job][static_cast<std::size_t>(i)] = 1;
      }
    }
  });

  for (std::size_t g = 1; g < G; ++g) {
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, k);
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t job = (g - 1) * R + r;
      sum += est[job];
      for (Eigen::Index i = 0; i < n; ++i)
        if (div[job][static_cast<std::size_t>(i)])
          out.fallback[static_cast<std::size_t>(i)] = true;
    }
    const Eigen::MatrixXd mean = sum / static_cast<double>(R);
    Eigen::MatrixXd ss = Eigen::MatrixXd::Zero(n, k);
    for (std::size_t r = 0; r < R; ++r)
      ss += (est[(g - 1) * R + r] - mean).array().square().matrix();
    out.grid_means[g] = mean;
    out.grid_variances[g] = ss / static_cast<double>(R - 1);
  }

  out.scores.resize(n, k);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(G), k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (out.fallback[static_cast<std::size_t>(i)]) {
      out.scores.row(i) = out.naive.row(i);
      continue;
    }
    for (std::size_t g = 0; g < G; ++g)
      values.row(static_cast<Eigen::Index>(g)) = out.grid_means[g].row(i);
    out.scores.row(i) =
        simex_extrapolate(sched.grid, values, sched.extrapolant).transpose();
  }
  return out;
}

}  // namespace dpsvd
