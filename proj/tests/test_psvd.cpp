#include <doctest.h>

#include <cmath>

#include "dpsvd/error.hpp"
#include "dpsvd/metrics.hpp"
#include "dpsvd/psvd.hpp"
#include "dpsvd/sim.hpp"

using namespace dpsvd;

namespace {

Dataset make_data(Eigen::Index n, Eigen::Index d, Eigen::Index k, double c,
                  std::uint64_t seed) {
  ScenarioSpec s;
  s.n = n;
  s.d = d;
  s.k_true = k;
  s.k_fit = k;
  s.mu_center = c;
  s.score_variances = {4.0, 1.0};
  return generate_dataset(s, 0, RngStream(seed));
}

FitOptions fixed_mu(const Dataset& ds, Eigen::Index k) {
  FitOptions o;
  o.k = k;
  o.mu_policy = MuPolicy::fixed;
  o.fixed_mu = ds.truth.mu;
  return o;
}

}  // namespace

TEST_SUITE("psvd") {

TEST_CASE("log column means") {
  Eigen::MatrixXd m(2, 3);
  m << 0, 4, 1, 0, 2, 3;
  const Eigen::VectorXd mu = log_column_means(CountMatrix::from_dense(m));
  CHECK(mu[0] == doctest::Approx(std::log(0.25)));
  CHECK(mu[1] == doctest::Approx(std::log(3.25)));
  CHECK(mu[2] == doctest::Approx(std::log(2.25)));
}

TEST_CASE("normalization: orthonormal V, orthogonal A, product kept") {
  Rng r(8);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd A(30, 3), V(12, 3);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = r.normal();
    for (Eigen::Index i = 0; i < V.size(); ++i) V.data()[i] = r.normal();
    const Factorization f = normalize_identifiable(A, V);
    CHECK((f.V.transpose() * f.V).isApprox(Eigen::Matrix3d::Identity(), 1e-10));
    const Eigen::MatrixXd g = f.A.transpose() * f.A;
    CHECK(std::abs(g(0, 1)) + std::abs(g(0, 2)) + std::abs(g(1, 2)) <
          1e-9 * g.diagonal().maxCoeff());
    CHECK(g(0, 0) >= g(1, 1));
    CHECK(g(1, 1) >= g(2, 2));
    CHECK((f.A * f.V.transpose() - A * V.transpose()).cwiseAbs().maxCoeff() <
          1e-10);
    const Factorization again = normalize_identifiable(f.A, f.V);
    CHECK((again.V - f.V).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("sign follows the reference") {
  Eigen::MatrixXd A = Eigen::MatrixXd::Ones(4, 1);
  Eigen::MatrixXd V(3, 1);
  V << 1, -2, 0.5;
  const Factorization f = normalize_identifiable(A, V, -V);
  CHECK(f.V(1, 0) > 0.0);
  const Factorization g = normalize_identifiable(A, V);
  CHECK(g.V(1, 0) > 0.0);  // largest magnitude entry made positive
  CHECK(g.V.cwiseAbs().maxCoeff() == doctest::Approx(g.V(1, 0)));
}

TEST_CASE("fit raises the likelihood every sweep") {
  const Dataset ds = make_data(60, 30, 2, -1.0, 3);
  for (bool accel : {false, true}) {
    FitOptions o = fixed_mu(ds, 2);
    o.extrapolate = accel;
    o.joint_steps = accel;
    const FitResult r = fit(ds.counts, o, RngStream(1));
    const auto& t = r.diagnostics.loglik_trace;
    REQUIRE(t.size() >= 2);
    for (std::size_t s = 1; s < t.size(); ++s) CHECK(t[s] >= t[s - 1]);
    CHECK(t.back() == doctest::Approx(log_likelihood(ds.counts, r.fit))
                          .epsilon(1e-12));
  }
}

TEST_CASE("fit recovers a strong rank-one signal") {
  const Dataset ds = make_data(200, 40, 1, 1.0, 4);
  const FitResult r = fit(ds.counts, fixed_mu(ds, 1), RngStream(2));
  CHECK(r.diagnostics.converged);
  CHECK(loading_alignment(r.fit.V, ds.truth.V) > 0.99);
  CHECK((r.fit.V.transpose() * r.fit.V)(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("accelerated and plain alternating reach the same optimum") {
  const Dataset ds = make_data(80, 20, 1, 0.0, 5);
  FitOptions plain = fixed_mu(ds, 1);
  plain.extrapolate = false;
  plain.joint_steps = false;
  plain.max_sweeps = 5000;
  plain.sweep_tolerance = 1e-12;
  const FitResult a = fit(ds.counts, plain, RngStream(1));
  const FitResult b = fit(ds.counts, fixed_mu(ds, 1), RngStream(1));
  CHECK(b.diagnostics.loglik_trace.back() >=
        a.diagnostics.loglik_trace.back() - 1e-3);
  CHECK(loading_alignment(a.fit.V, b.fit.V) > 0.9999);
}

TEST_CASE("mu policies") {
  const Dataset ds = make_data(50, 15, 1, 0.0, 6);
  FitOptions o;
  o.k = 1;
  o.mu_policy = MuPolicy::log_column_means;
  const FitResult a = fit(ds.counts, o, RngStream(1));
  CHECK(a.fit.mu.isApprox(log_column_means(ds.counts)));
  o.mu_policy = MuPolicy::alternating;
  const FitResult b = fit(ds.counts, o, RngStream(1));
  CHECK(b.diagnostics.loglik_trace.back() >=
        log_likelihood(ds.counts, a.fit) - 1e-6);
}

TEST_CASE("estimate_scores equals per-row regressions") {
  const Dataset ds = make_data(20, 25, 2, 0.0, 7);
  const ScoreEstimates s =
      estimate_scores(ds.counts, ds.truth.mu, ds.truth.V, ScoreMethod::mle);
  const Eigen::MatrixXd x = ds.counts.to_dense();
  for (Eigen::Index i = 0; i < 20; ++i) {
    const Eigen::VectorXd y = x.row(i).transpose();
    const GlmSolution g = fit_mle({y, ds.truth.V, ds.truth.mu});
    CHECK((s.scores.row(i).transpose() - g.beta).norm() < 1e-8);
  }
}

TEST_CASE("bad inputs are reported") {
  const Dataset ds = make_data(10, 8, 1, 0.0, 1);
  FitOptions o = fixed_mu(ds, 1);
  o.init_V = Eigen::MatrixXd::Zero(3, 1);
  o.init_A = Eigen::MatrixXd::Zero(10, 1);
  CHECK_THROWS_AS(fit(ds.counts, o, RngStream(1)), Error);
  FitOptions too_big = fixed_mu(ds, 9);
  CHECK_THROWS_AS(fit(ds.counts, too_big, RngStream(1)), Error);
}

}  // TEST_SUITE
