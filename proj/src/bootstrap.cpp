#include "dpsvd/bootstrap.hpp"

#include <sstream>

#include "dpsvd/error.hpp"

namespace dpsvd {

namespace {

void check_inputs(const CountMatrix& x, const LowRankFit& fit) {
  validate(fit);
  if (x.rows() != fit.rows() || x.cols() != fit.cols())
    data_error("bootstrap: counts and fit dimensions differ");
}

// One parametric replicate: draw from the generator's means, refit with the
// main effects held at the original estimate, align signs with V_hat.
struct PsvdRefit {
  const LowRankFit& original;
  const FitOptions& opts;
  const BootstrapConfig& cfg;

  Replicate<LowRankFit> operator()(const LowRankFit& generator,
                                   const RngStream& stream) const {
    Replicate<LowRankFit> out;
    try {
      const CountMatrix sample =
          sample_counts(mean_matrix(generator), stream.child(0));
      FitOptions o = opts;
      o.k = original.rank();
      o.mu_policy = MuPolicy::fixed;
      o.fixed_mu = original.mu;
      o.score_method = ScoreMethod::mle;
      const FitResult r = fit(sample, o, stream.child(1));
      const double limit =
          cfg.max_diverged_col_fraction * static_cast<double>(original.cols());
      if (r.diagnostics.diverged_cols > limit) {
        std::ostringstream os;
        os << r.diagnostics.diverged_cols
           << " column regressions diverged";
        out.failure = os.str();
        return out;
      }
      const Factorization norm =
          normalize_identifiable(r.fit.A, r.fit.V, original.V);
      out.model = LowRankFit{original.mu, norm.A, norm.V};
    } catch (const Error& e) {
      out.failure = e.what();
    }
    return out;
  }
};

std::string label(const char* level, std::size_t b, long c = -1) {
  std::ostringstream os;
  os << level << " b=" << b;
  if (c >= 0) os << " c=" << c;
  return os.str();
}

void check_failure_budget(const DebiasResult& r, const BootstrapConfig& cfg,
                          int total) {
  const int failed = r.failed_level1 + r.failed_level2;
  if (failed > cfg.max_failed_fraction * total) {
    std::ostringstream os;
    os << "bootstrap: " << failed << " of " << total
       << " replicates failed; correction unreliable";
    if (!r.failures.empty()) os << " (first: " << r.failures.front() << ")";
    numerical_error(os.str());
  }
}

}  // namespace

void validate(const BootstrapConfig& cfg) {
  if (cfg.B < 1) usage_error("bootstrap: B must be at least 1");
  if (cfg.mode == BootstrapMode::iterative && cfg.C < 1)
    usage_error("bootstrap: C must be at least 1");
  if (!(cfg.max_failed_fraction >= 0.0 && cfg.max_failed_fraction <= 1.0))
    usage_error("bootstrap: failed fraction must lie in [0, 1]");
}

DebiasResult iterative_bootstrap_debias(const CountMatrix& x,
                                        const LowRankFit& fit,
                                        const BootstrapConfig& cfg,
                                        const FitOptions& opts) {
  validate(cfg);
  if (cfg.mode != BootstrapMode::iterative)
    usage_error("iterative_bootstrap_debias needs an iterative config");
  check_inputs(x, fit);

  const auto draws = run_nested_bootstrap(fit, PsvdRefit{fit, opts, cfg},
                                          cfg.B, cfg.C, RngStream(cfg.seed));
  DebiasResult r;
  std::vector<Eigen::MatrixXd> l1, l2;
  for (std::size_t b = 0; b < draws.level1.size(); ++b) {
    const auto& rep = draws.level1[b];
    if (rep.model) {
      ++r.succeeded_level1;
      r.level1.emplace_back(rep.model->V);
      l1.push_back(rep.model->V);
    } else {
      ++r.failed_level1;
      r.level1.emplace_back(std::nullopt);
      r.failures.push_back(label("level1", b) + ": " + rep.failure);
    }
    for (long c = 0; c < cfg.C; ++c) {
      if (!rep.model) {
        ++r.failed_level2;
        r.level2.emplace_back(std::nullopt);
        continue;
      }
      const auto& rep2 = draws.level2[b][static_cast<std::size_t>(c)];
      if (rep2.model) {
        ++r.succeeded_level2;
        r.level2.emplace_back(rep2.model->V);
        l2.push_back(rep2.model->V);
      } else {
        ++r.failed_level2;
        r.level2.emplace_back(std::nullopt);
        r.failures.push_back(label("level2", b, c) + ": " + rep2.failure);
      }
    }
  }
  check_failure_budget(r, cfg, cfg.B + cfg.B * cfg.C);
  if (l1.empty() || l2.empty())
    numerical_error("bootstrap: no successful replicates at some level");
  r.V_tilde = iterative_combine(Eigen::MatrixXd(fit.V), l1, l2);
  return r;
}

DebiasResult classical_bootstrap_debias(const CountMatrix& x,
                                        const LowRankFit& fit,
                                        const BootstrapConfig& cfg,
                                        const FitOptions& opts) {
  validate(cfg);
  if (cfg.mode != BootstrapMode::classical)
    usage_error("classical_bootstrap_debias needs a classical config");
  check_inputs(x, fit);

  const auto draws = run_nested_bootstrap(fit, PsvdRefit{fit, opts, cfg},
                                          cfg.B, 0, RngStream(cfg.seed));
  DebiasResult r;
  std::vector<Eigen::MatrixXd> l1;
  for (std::size_t b = 0; b < draws.level1.size(); ++b) {
    const auto& rep = draws.level1[b];
    if (rep.model) {
      ++r.succeeded_level1;
      r.level1.emplace_back(rep.model->V);
      l1.push_back(rep.model->V);
    } else {
      ++r.failed_level1;
      r.level1.emplace_back(std::nullopt);
      r.failures.push_back(label("level1", b) + ": " + rep.failure);
    }
  }
  check_failure_budget(r, cfg, cfg.B);
  if (l1.empty()) numerical_error("bootstrap: no successful replicates");
  r.V_tilde = classical_combine(Eigen::MatrixXd(fit.V), l1);
  return r;
}

}  // namespace dpsvd
