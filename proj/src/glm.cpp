#include "dpsvd/glm.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "dpsvd/error.hpp"

namespace dpsvd {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_problem(const GlmProblem& p) {
  const auto m = p.y.size();
  if (p.X.rows() != m || p.offset.size() != m) {
    std::ostringstream os;
    os << "glm: response has " << m << " rows, design " << p.X.rows()
       << ", offset " << p.offset.size();
    data_error(os.str());
  }
  if (p.X.cols() < 1) data_error("glm: design has no columns");
  if (m < p.X.cols()) data_error("glm: fewer observations than coefficients");
  if (!p.X.allFinite() || !p.offset.allFinite())
    numerical_error("glm: non-finite design or offset");
  for (Eigen::Index i = 0; i < m; ++i) {
    const double v = p.y[i];
    if (!std::isfinite(v) || v < 0.0 || std::floor(v) != v)
      data_error("glm: response must be nonnegative integer counts");
  }
}

// Linear predictor, means and objective at one coefficient vector.
struct Point {
  Eigen::VectorXd beta;
  Eigen::VectorXd eta;
  Eigen::VectorXd mu;
  double loglik = kNegInf;
  double objective = kNegInf;
};

struct Factor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
};

Eigen::MatrixXd information(const GlmProblem& p, const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd wx = p.X.array().colwise() * mu.array();
  return p.X.transpose() * wx;
}

Factor factor(const Eigen::MatrixXd& info) {
  Factor f;
  f.llt.compute(info);
  f.ok = f.llt.info() == Eigen::Success &&
         (f.llt.matrixLLT().diagonal().array() > 0.0).all() &&
         f.llt.matrixLLT().allFinite();
  return f;
}

double half_log_det(const Factor& f) {
  return f.llt.matrixLLT().diagonal().array().log().sum();
}

Point evaluate(const GlmProblem& p, const Eigen::VectorXd& beta, bool firth) {
  Point pt;
  pt.beta = beta;
  pt.eta = p.offset + p.X * beta;
  pt.mu = pt.eta.array().exp().matrix();
  if (!pt.mu.allFinite()) return pt;
  pt.loglik = p.y.dot(pt.eta) - pt.mu.sum();
  pt.objective = pt.loglik;
  if (firth) {
    const Factor f = factor(information(p, pt.mu));
    pt.objective = f.ok ? pt.loglik + half_log_det(f) : kNegInf;
  }
  return pt;
}

// Leverages h_i = w_i x_i^T I^-1 x_i.
Eigen::VectorXd leverages(const GlmProblem& p, const Eigen::VectorXd& mu,
                          const Factor& f) {
  const Eigen::MatrixXd sx =
      (p.X.array().colwise() * mu.array().sqrt()).matrix().transpose();
  const Eigen::MatrixXd z = f.llt.matrixL().solve(sx);
  return z.colwise().squaredNorm().transpose();
}

Eigen::VectorXd gradient_at(const GlmProblem& p, const Point& pt, bool firth,
                            const Factor* f) {
  Eigen::VectorXd resid = p.y - pt.mu;
  if (firth) resid += 0.5 * leverages(p, pt.mu, *f);
  return p.X.transpose() * resid;
}

Factor factor_with_ridge(const Eigen::MatrixXd& info, double ridge) {
  Factor f = factor(info);
  if (f.ok) return f;
  Eigen::MatrixXd damped = info;
  damped.diagonal().array() += ridge;
  f = factor(damped);
  if (!f.ok)
    numerical_error("glm: information matrix singular after ridge fallback");
  return f;
}

GlmSolution solve(const GlmProblem& p, const SolverOptions& opts,
                  const Eigen::VectorXd& init, bool firth) {
  check_problem(p);
  const auto k = p.X.cols();
  if (init.size() != 0 && init.size() != k)
    data_error("glm: warm start has the wrong length");
  if (init.size() != 0 && !init.allFinite())
    numerical_error("glm: non-finite warm start");

  GlmSolution sol;
  sol.gradient_tolerance =
      opts.tolerance *
      (1.0 + (p.X.transpose() * p.y).cwiseAbs().maxCoeff());

  Point cur = evaluate(p, init.size() ? init : Eigen::VectorXd::Zero(k),
                       firth);
  if (!std::isfinite(cur.objective)) {
    if (init.size() == 0)
      numerical_error("glm: objective is not finite at the starting point");
    cur = evaluate(p, Eigen::VectorXd::Zero(k), firth);
    if (!std::isfinite(cur.objective))
      numerical_error("glm: objective is not finite at the starting point");
  }
  sol.objective_trace.push_back(cur.objective);

  double last_ext = (cur.eta - p.offset).cwiseAbs().maxCoeff();
  int drift = 0;
  auto mark_diverged = [&] {
    sol.diverged = true;
    sol.final_gradient_norm =
        gradient_at(p, cur, false, nullptr).cwiseAbs().maxCoeff();
    if (firth) {
      const Factor ff = factor_with_ridge(information(p, cur.mu), opts.ridge);
      sol.final_gradient_norm =
          gradient_at(p, cur, true, &ff).cwiseAbs().maxCoeff();
    }
  };

  for (int it = 0;; ++it) {
    const Eigen::MatrixXd info = information(p, cur.mu);
    Factor plain = factor(info);
    const Factor f = plain.ok ? plain : factor_with_ridge(info, opts.ridge);
    const Eigen::VectorXd g = gradient_at(p, cur, firth, &f);
    const Eigen::VectorXd step = f.llt.solve(g);
    const double gnorm = g.cwiseAbs().maxCoeff();
    const double decrement = g.dot(step);
    sol.final_gradient_norm = gnorm;
    sol.iterations = it;

    // Decrement relative to the objective scale; an absolute bound sits
    // below round-off for large counts.
    const double dec_tol = opts.tolerance * opts.tolerance *
                           std::max(1.0, std::abs(cur.objective));
    if (gnorm <= sol.gradient_tolerance && decrement <= dec_tol) {
      sol.converged = true;
      break;
    }
    if (it >= opts.max_iterations) break;
    if (!step.allFinite()) numerical_error("glm: non-finite Newton step");

    // Near the optimum the true gain g^T H^-1 g / 2 drops below the round-off
    // of the objective; there the full Newton step is taken if it stays within
    // that noise and shrinks the gradient.
    const double noise =
        64.0 * std::numeric_limits<double>::epsilon() *
        (p.y.dot(cur.eta.cwiseAbs()) + cur.mu.sum() + std::abs(cur.objective));
    if (decrement <= 1e3 * noise) {
      Point cand = evaluate(p, cur.beta + step, firth);
      if (!std::isfinite(cand.objective) ||
          cand.objective < cur.objective - noise) {
        sol.converged = gnorm <= sol.gradient_tolerance;
        break;
      }
      std::optional<Factor> cf;
      if (firth) cf = factor_with_ridge(information(p, cand.mu), opts.ridge);
      const double cg =
          gradient_at(p, cand, firth, cf ? &*cf : nullptr).cwiseAbs().maxCoeff();
      if (!(cg < gnorm)) {
        // Round-off floor reached.
        sol.converged = gnorm <= sol.gradient_tolerance || decrement <= dec_tol;
        break;
      }
      cur = std::move(cand);
      sol.objective_trace.push_back(cur.objective);
      continue;
    }

    double t = 1.0;
    bool accepted = false;
    Point cand;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      cand = evaluate(p, cur.beta + t * step, firth);
      if (std::isfinite(cand.objective) && cand.objective >= cur.objective) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable ascent left along the Newton direction.
      sol.converged = gnorm <= sol.gradient_tolerance;
      break;
    }
    cur = std::move(cand);
    sol.objective_trace.push_back(cur.objective);

    // Past the bound, a predictor that keeps growing by a fixed amount per
    // Newton step is heading to infinity; one that settles (an extreme
    // covariate value at a finite optimum) is left to converge.
    const double ext = (cur.eta - p.offset).cwiseAbs().maxCoeff();
    drift = ext > opts.divergence_bound && ext >= last_ext + 0.5 ? drift + 1 : 0;
    last_ext = ext;
    if (drift >= 3) {
      sol.iterations = it + 1;
      mark_diverged();
      break;
    }
  }
  if (!sol.converged && !sol.diverged &&
      (cur.eta - p.offset).cwiseAbs().maxCoeff() > opts.divergence_bound)
    mark_diverged();
  sol.beta = cur.beta;
  sol.objective = cur.objective;
  return sol;
}

}  // namespace

double poisson_objective(const GlmProblem& p, const Eigen::VectorXd& beta,
                         bool firth) {
  check_problem(p);
  return evaluate(p, beta, firth).objective;
}

Eigen::VectorXd poisson_gradient(const GlmProblem& p,
                                 const Eigen::VectorXd& beta, bool firth) {
  check_problem(p);
  const Point pt = evaluate(p, beta, false);
  if (!firth) return gradient_at(p, pt, false, nullptr);
  const Factor f = factor(information(p, pt.mu));
  if (!f.ok) numerical_error("glm: information matrix not positive definite");
  return gradient_at(p, pt, true, &f);
}

Eigen::MatrixXd fisher_information(const GlmProblem& p,
                                   const Eigen::VectorXd& beta) {
  check_problem(p);
  const Eigen::VectorXd mu =
      (p.offset + p.X * beta).array().exp().matrix();
  return information(p, mu);
}

GlmSolution fit_mle(const GlmProblem& p, const SolverOptions& opts,
                    const Eigen::VectorXd& init) {
  return solve(p, opts, init, false);
}

GlmSolution fit_firth(const GlmProblem& p, const SolverOptions& opts,
                      const Eigen::VectorXd& init) {
  check_problem(p);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(p.X);
  qr.setThreshold(1e-12);
  if (qr.rank() < p.X.cols()) {
    std::ostringstream os;
    os << "glm: design has rank " << qr.rank() << " < " << p.X.cols()
       << " columns";
    data_error(os.str());
  }
  return solve(p, opts, init, true);
}

Eigen::MatrixXd asymptotic_covariance(const GlmProblem& p,
                                      const Eigen::VectorXd& beta) {
  if (!beta.allFinite()) numerical_error("glm: non-finite coefficients");
  const Eigen::MatrixXd info = fisher_information(p, beta);
  const Factor f = factor(info);
  if (!f.ok) numerical_error("glm: singular information matrix");
  const Eigen::VectorXd diag = f.llt.matrixLLT().diagonal();
  if (diag.minCoeff() <= 1e-12 * diag.maxCoeff())
    numerical_error("glm: singular information matrix");
  return f.llt.solve(
      Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

}  // namespace dpsvd
