#include "dpsvd/psvd.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "dpsvd/error.hpp"
#include "dpsvd/parallel.hpp"

namespace dpsvd {

namespace {

// Cached dense counts and log(x!) for repeated likelihood evaluation.
struct DenseCounts {
  Eigen::MatrixXd x;
  Eigen::MatrixXd log_factorial;

  explicit DenseCounts(const CountMatrix& counts) : x(counts.to_dense()) {
    log_factorial = x.unaryExpr([](double v) { return std::lgamma(v + 1.0); });
  }

  double loglik(const Eigen::MatrixXd& theta) const {
    Eigen::VectorXd rows(theta.rows());
    Eigen::VectorXd cell(theta.cols());
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      for (Eigen::Index j = 0; j < theta.cols(); ++j) {
        const double t = theta(i, j);
        const double xv = x(i, j);
        cell[j] = (xv != 0.0 ? xv * t - log_factorial(i, j) : 0.0) -
                  std::exp(t);
      }
      rows[i] = pairwise_sum(cell);
    }
    return pairwise_sum(rows);
  }
};

Eigen::MatrixXd theta_of(const Eigen::VectorXd& mu, const Eigen::MatrixXd& A,
                         const Eigen::MatrixXd& V) {
  Eigen::MatrixXd theta = A * V.transpose();
  theta.rowwise() += mu.transpose();
  return theta;
}

// One damped Gauss-Newton step on (A, V) jointly, mu fixed. The Schur
// complement eliminates the block-diagonal score part, leaving a dense
// (d k) x (d k) system in component-major order (index l d + j). Marquardt
// damping is raised until the likelihood increases; returns false (and
// leaves A, V untouched) otherwise.
bool joint_step(const DenseCounts& data, const Eigen::VectorXd& mu,
                Eigen::MatrixXd& A, Eigen::MatrixXd& V, double& ll) {
  const auto n = A.rows();
  const auto d = V.rows();
  const auto k = A.cols();
  const Eigen::MatrixXd lam = theta_of(mu, A, V).array().exp().matrix();
  if (!lam.allFinite()) return false;
  const Eigen::MatrixXd R = data.x - lam;
  const Eigen::MatrixXd gA = R * V;
  const Eigen::MatrixXd gV = R.transpose() * A;

  // H = [diag(lam_i.) V]_i, d x (n k); the (v, a_i) coupling is H_i a_i^T.
  Eigen::MatrixXd H(d, n * k);
  for (Eigen::Index i = 0; i < n; ++i)
    H.middleCols(i * k, k) = lam.row(i).transpose().asDiagonal() * V;

  const Eigen::Index m = d * k;
  for (double damp : {1e-4, 1e-2, 1.0, 1e2}) {
    auto damped = [&](Eigen::MatrixXd h) {
      h.diagonal() = h.diagonal() * (1.0 + damp) +
                     Eigen::VectorXd::Constant(h.rows(), 1e-12);
      return h;
    };
    // GP_i = H_i P_i with P_i the inverse damped score block.
    Eigen::MatrixXd GP(d, n * k);
    std::vector<Eigen::LLT<Eigen::MatrixXd>> PA(static_cast<std::size_t>(n));
    bool ok = true;
    for (Eigen::Index i = 0; i < n && ok; ++i) {
      auto& P = PA[static_cast<std::size_t>(i)];
      P.compute(damped(V.transpose() * lam.row(i).transpose().asDiagonal() * V));
      ok = P.info() == Eigen::Success;
      if (ok)
        GP.middleCols(i * k, k) =
            P.solve(H.middleCols(i * k, k).transpose()).transpose();
    }
    if (!ok) continue;

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index j = 0; j < d; ++j) {
      const Eigen::MatrixXd hv =
          damped(A.transpose() * lam.col(j).asDiagonal() * A);
      for (Eigen::Index l = 0; l < k; ++l) {
        rhs[l * d + j] = gV(j, l);
        for (Eigen::Index q = 0; q < k; ++q) S(l * d + j, q * d + j) = hv(l, q);
      }
    }
    for (Eigen::Index l = 0; l < k; ++l) {
      for (Eigen::Index q = l; q < k; ++q) {
        Eigen::VectorXd scale(n * k);
        for (Eigen::Index i = 0; i < n; ++i)
          scale.segment(i * k, k).setConstant(A(i, l) * A(i, q));
        const Eigen::MatrixXd block =
            (GP * scale.asDiagonal()) * H.transpose();
        S.block(l * d, q * d, d, d) -= block;
        if (q != l) S.block(q * d, l * d, d, d) -= block.transpose();
      }
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
      for (Eigen::Index i = 0; i < n; ++i)
        acc += A(i, l) * (GP.middleCols(i * k, k) * gA.row(i).transpose());
      rhs.segment(l * d, d) -= acc;
    }

    Eigen::LLT<Eigen::MatrixXd> sf(S);
    if (sf.info() != Eigen::Success) continue;
    const Eigen::VectorXd dv = sf.solve(rhs);
    if (!dv.allFinite()) continue;
    Eigen::MatrixXd dV(d, k);
    for (Eigen::Index l = 0; l < k; ++l) dV.col(l) = dv.segment(l * d, d);
    Eigen::MatrixXd dA(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd coupling =
          H.middleCols(i * k, k).transpose() * (dV * A.row(i).transpose());
      dA.row(i) = PA[static_cast<std::size_t>(i)]
                      .solve(gA.row(i).transpose() - coupling)
                      .transpose();
    }
    const double cand = data.loglik(theta_of(mu, A + dA, V + dV));
    if (std::isfinite(cand) && cand > ll) {
      A += dA;
      V += dV;
      ll = cand;
      return true;
    }
  }
  return false;
}

// Orthonormal columns spanning the complement of `basis` (d x r), filled
// from the given stream.
Eigen::MatrixXd random_complement(const Eigen::MatrixXd& basis,
                                  Eigen::Index extra,
                                  const RngStream& stream) {
  const auto d = basis.rows();
  Rng rng(stream);
  Eigen::MatrixXd m(d, basis.cols() + extra);
  m.leftCols(basis.cols()) = basis;
  for (Eigen::Index j = basis.cols(); j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(d, m.cols());
  return q.rightCols(extra);
}

// Truncated SVD of the column-centered log(X + 0.5).
void initialize(const DenseCounts& data, Eigen::Index k,
                const RngStream& stream, Eigen::MatrixXd& A,
                Eigen::MatrixXd& V) {
  Eigen::MatrixXd centered = (data.x.array() + 0.5).log().matrix();
  const Eigen::RowVectorXd means = centered.colwise().mean();
  centered.rowwise() -= means;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const double cutoff = 1e-10 * std::max(s.size() ? s[0] : 0.0, 1e-300);
  Eigen::Index usable = 0;
  while (usable < k && usable < s.size() && s[usable] > cutoff) ++usable;

  A = Eigen::MatrixXd::Zero(data.x.rows(), k);
  V.resize(data.x.cols(), k);
  A.leftCols(usable) =
      svd.matrixU().leftCols(usable) * s.head(usable).asDiagonal();
  V.leftCols(usable) = svd.matrixV().leftCols(usable);
  if (usable < k) {
    V.rightCols(k - usable) = random_complement(
        V.leftCols(usable), k - usable, stream.child(0));
  }
}

void check_options(const CountMatrix& x, const FitOptions& opts) {
  if (opts.k < 1) usage_error("rank k must be at least 1");
  if (opts.k >= x.cols()) {
    std::ostringstream os;
    os << "rank k = " << opts.k << " must be smaller than d = " << x.cols();
    usage_error(os.str());
  }
  if (opts.k > x.rows()) usage_error("rank k exceeds the number of rows");
  if (!(opts.sweep_tolerance > 0.0) || !(opts.solver.tolerance > 0.0))
    usage_error("tolerances must be positive");
  if (opts.max_sweeps < 1) usage_error("max_sweeps must be at least 1");
  if (opts.mu_policy == MuPolicy::fixed) {
    if (opts.fixed_mu.size() != x.cols())
      data_error("fixed main effects must have length d");
    if (!opts.fixed_mu.allFinite())
      numerical_error("fixed main effects must be finite");
  }
}

}  // namespace

Eigen::VectorXd log_column_means(const CountMatrix& x) {
  const double n = static_cast<double>(x.rows());
  return ((x.col_sums().array() + 0.5) / n).log().matrix();
}

FitResult fit(const CountMatrix& x, const FitOptions& opts,
              const RngStream& stream) {
  check_options(x, opts);
  const DenseCounts data(x);
  const auto n = x.rows();
  const auto d = x.cols();
  const auto k = opts.k;
  const bool alternating_mu = opts.mu_policy == MuPolicy::alternating;

  Eigen::VectorXd mu = opts.mu_policy == MuPolicy::fixed
                           ? opts.fixed_mu
                           : log_column_means(x);
  Eigen::MatrixXd A, V;
  if (opts.init_A.size() || opts.init_V.size()) {
    if (opts.init_A.rows() != n || opts.init_A.cols() != k ||
        opts.init_V.rows() != d || opts.init_V.cols() != k)
      data_error("fit: starting point must be n x k and d x k");
    A = opts.init_A;
    V = opts.init_V;
  } else {
    initialize(data, k, stream, A, V);
  }

  FitResult result;
  auto& diag = result.diagnostics;
  double ll = data.loglik(theta_of(mu, A, V));
  if (!std::isfinite(ll))
    numerical_error("fit: log-likelihood is not finite at the initial point");
  diag.loglik_trace.push_back(ll);

  std::vector<char> row_div(static_cast<std::size_t>(n), 0);
  std::vector<char> col_div(static_cast<std::size_t>(d), 0);

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    const double ll_start = ll;
    const Eigen::MatrixXd A0 = A;
    const Eigen::MatrixXd V0 = V;
    const Eigen::VectorXd mu0 = mu;

    // Scores: one regression per row, offset mu, design V.
    Eigen::MatrixXd A_new = A;
    std::vector<char> row_flags(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
      const auto i = static_cast<Eigen::Index>(r);
      const Eigen::VectorXd y = data.x.row(i).transpose();
      const Eigen::VectorXd init = A.row(i).transpose();
      const GlmSolution s = fit_mle({y, V, mu}, opts.solver, init);
      A_new.row(i) = s.beta.transpose();
      row_flags[r] = s.diverged;
    });
    const double ll_a = data.loglik(theta_of(mu, A_new, V));
    if (!(ll_a >= ll)) {
      diag.converged = true;
      break;
    }
    A = std::move(A_new);
    row_div = std::move(row_flags);
    ll = ll_a;

    // Loadings (and main effects when alternating): one regression per column.
    Eigen::MatrixXd V_new = V;
    Eigen::VectorXd mu_new = mu;
    std::vector<char> col_flags(static_cast<std::size_t>(d), 0);
    const Eigen::MatrixXd design =
        alternating_mu
            ? (Eigen::MatrixXd(n, k + 1) << Eigen::VectorXd::Ones(n), A)
                  .finished()
            : A;
    parallel_for(static_cast<std::size_t>(d), [&](std::size_t c) {
      const auto j = static_cast<Eigen::Index>(c);
      const Eigen::VectorXd y = data.x.col(j);
      if (alternating_mu) {
        const Eigen::VectorXd offset = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd init(k + 1);
        init << mu[j], V.row(j).transpose();
        const GlmSolution s = fit_mle({y, design, offset}, opts.solver, init);
        mu_new[j] = s.beta[0];
        V_new.row(j) = s.beta.tail(k).transpose();
        col_flags[c] = s.diverged;
      } else {
        const Eigen::VectorXd offset = Eigen::VectorXd::Constant(n, mu[j]);
        const Eigen::VectorXd init = V.row(j).transpose();
        const GlmSolution s = fit_mle({y, design, offset}, opts.solver, init);
        V_new.row(j) = s.beta.transpose();
        col_flags[c] = s.diverged;
      }
    });
    const double ll_v = data.loglik(theta_of(mu_new, A, V_new));
    if (!(ll_v >= ll)) {
      diag.converged = true;
      diag.sweeps = sweep + 1;
      diag.loglik_trace.push_back(ll);
      break;
    }
    V = std::move(V_new);
    mu = std::move(mu_new);
    col_div = std::move(col_flags);
    ll = ll_v;

    // Joint step on the coupled (A, V) directions that alternating
    // regressions traverse slowly; only kept if it raises the likelihood.
    if (opts.joint_steps && d * k <= opts.max_joint_size)
      joint_step(data, mu, A, V, ll);

    // Extrapolate along the sweep direction (doubling steps); kept only if
    // the likelihood strictly increases, so ascent is preserved.
    if (opts.extrapolate) {
      const Eigen::MatrixXd dA = A - A0;
      const Eigen::MatrixXd dV = V - V0;
      const Eigen::VectorXd dmu = mu - mu0;
      double best = ll;
      double t_best = 0.0;
      for (double t = 1.0; t <= opts.max_extrapolation; t *= 2.0) {
        const double cand =
            data.loglik(theta_of(mu + t * dmu, A + t * dA, V + t * dV));
        if (!(cand > best)) break;
        best = cand;
        t_best = t;
      }
      if (t_best > 0.0) {
        A += t_best * dA;
        V += t_best * dV;
        mu += t_best * dmu;
        ll = best;
      }
    }
    diag.sweeps = sweep + 1;
    diag.loglik_trace.push_back(ll);

    if (std::fabs(ll - ll_start) <=
        opts.sweep_tolerance * std::max(std::fabs(ll_start), 1e-300)) {
      diag.converged = true;
      break;
    }
  }

  for (char f : row_div) diag.diverged_rows += f;
  for (char f : col_div) diag.diverged_cols += f;

  Factorization norm;
  try {
    norm = normalize_identifiable(A, V);
  } catch (const Error&) {
    // A V^T below rank k (e.g. an all-zero matrix): keep the product and
    // orthonormalize V only.
    Eigen::HouseholderQR<Eigen::MatrixXd> qv(V);
    norm.V = qv.householderQ() * Eigen::MatrixXd::Identity(d, k);
    const Eigen::MatrixXd Rv =
        qv.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    norm.A = A * Rv.transpose();
    diag.normalized = false;
  }
  result.fit.mu = std::move(mu);
  result.fit.V = std::move(norm.V);
  result.fit.A = std::move(norm.A);

  if (opts.score_method == ScoreMethod::firth) {
    ScoreEstimates s = estimate_scores(x, result.fit.mu, result.fit.V,
                                       ScoreMethod::firth, opts.solver);
    result.fit.A = std::move(s.scores);
  }
  return result;
}

Factorization normalize_identifiable(const Eigen::MatrixXd& A,
                                     const Eigen::MatrixXd& V,
                                     const Eigen::MatrixXd& reference) {
  const auto k = V.cols();
  if (A.cols() != k) data_error("normalize: scores and loadings rank differ");
  if (A.rows() < k || V.rows() < k)
    data_error("normalize: fewer rows than components");
  if (reference.size() != 0 &&
      (reference.rows() != V.rows() || reference.cols() != k))
    data_error("normalize: reference loadings have the wrong shape");

  // A V^T = Qa (Ra Rv^T) Qv^T, so only a k x k SVD is needed.
  Eigen::HouseholderQR<Eigen::MatrixXd> qa(A), qv(V);
  const Eigen::MatrixXd Qa =
      qa.householderQ() * Eigen::MatrixXd::Identity(A.rows(), k);
  const Eigen::MatrixXd Qv =
      qv.householderQ() * Eigen::MatrixXd::Identity(V.rows(), k);
  const Eigen::MatrixXd Ra =
      qa.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rv =
      qv.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      Ra * Rv.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd s = svd.singularValues();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(s[j] > 1e-12 * s[0])) {
      std::ostringstream os;
      os << "normalize: component " << j + 1 << " of " << k
         << " is numerically rank deficient";
      numerical_error(os.str());
    }
  }

  Factorization out;
  out.A = Qa * svd.matrixU() * s.asDiagonal();
  out.V = Qv * svd.matrixV();
  for (Eigen::Index j = 0; j < k; ++j) {
    double align = 0.0;
    if (reference.size() != 0) align = out.V.col(j).dot(reference.col(j));
    if (align == 0.0) {
      Eigen::Index arg;
      out.V.col(j).cwiseAbs().maxCoeff(&arg);
      align = out.V(arg, j);
    }
    if (align < 0.0) {
      out.V.col(j) *= -1.0;
      out.A.col(j) *= -1.0;
    }
  }
  return out;
}

ScoreEstimates estimate_scores(const CountMatrix& x_new,
                               const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& V, ScoreMethod method,
                               const SolverOptions& solver) {
  if (x_new.cols() != V.rows() || mu.size() != V.rows())
    data_error("estimate_scores: column count disagrees with the loadings");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(V);
  qr.setThreshold(1e-12);
  if (qr.rank() < V.cols())
    data_error("estimate_scores: loadings are not of full column rank");

  const Eigen::MatrixXd x = x_new.to_dense();
  const auto n = x.rows();
  ScoreEstimates out;
  out.scores.resize(n, V.cols());
  std::vector<char> div(static_cast<std::size_t>(n), 0),
      conv(static_cast<std::size_t>(n), 0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t r) {
    const auto i = static_cast<Eigen::Index>(r);
    const Eigen::VectorXd y = x.row(i).transpose();
    const GlmSolution s = method == ScoreMethod::firth
                              ? fit_firth({y, V, mu}, solver)
                              : fit_mle({y, V, mu}, solver);
    out.scores.row(i) = s.beta.transpose();
    div[r] = s.diverged;
    conv[r] = s.converged;
  });
  out.diverged.assign(div.begin(), div.end());
  out.converged.assign(conv.begin(), conv.end());
  return out;
}

}  // namespace dpsvd
