#include <doctest.h>

#include <cmath>

#include "dpsvd/bootstrap.hpp"
#include "dpsvd/error.hpp"
#include "dpsvd/sim.hpp"
#include "toy_variance.hpp"

using namespace dpsvd;

namespace {

struct Fixture {
  Dataset ds;
  LowRankFit fit;
  FitOptions opts;
};

Fixture make_fixture() {
  ScenarioSpec s;
  s.n = 40;
  s.d = 15;
  s.mu_center = 0.0;
  Fixture f{generate_dataset(s, 0, RngStream(12)), {}, {}};
  f.opts.k = 1;
  f.opts.mu_policy = MuPolicy::fixed;
  f.opts.fixed_mu = f.ds.truth.mu;
  const FitResult r = dpsvd::fit(f.ds.counts, f.opts, RngStream(1));
  const Factorization n = normalize_identifiable(r.fit.A, r.fit.V);
  f.fit = {r.fit.mu, n.A, n.V};
  return f;
}

}  // namespace

TEST_SUITE("bootstrap") {

TEST_CASE("zero-bias replicates return the estimate") {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Random(6, 2);
  const std::vector<Eigen::MatrixXd> l1(4, v), l2(12, v);
  CHECK(iterative_combine(v, l1, l2).isApprox(v, 1e-15));
  CHECK(classical_combine(v, l1).isApprox(v, 1e-15));
}

TEST_CASE("the combination is affine") {
  Rng r(2);
  auto rnd = [&] {
    Eigen::MatrixXd m(5, 2);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.normal();
    return m;
  };
  const Eigen::MatrixXd v = rnd(), delta = rnd();
  std::vector<Eigen::MatrixXd> l1, l2, s1, s2;
  for (int b = 0; b < 3; ++b) {
    l1.push_back(rnd());
    s1.push_back(l1.back() + delta);
  }
  for (int b = 0; b < 6; ++b) {
    l2.push_back(rnd());
    s2.push_back(l2.back() + delta);
  }
  const Eigen::MatrixXd base = iterative_combine(v, l1, l2);
  const Eigen::MatrixXd shifted = iterative_combine(Eigen::MatrixXd(v + delta), s1, s2);
  CHECK((shifted - base - delta).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd cb = classical_combine(v, l1);
  const Eigen::MatrixXd cs = classical_combine(Eigen::MatrixXd(v + delta), s1);
  CHECK((cs - cb - delta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("toy variance: corrections remove the -sigma2/m bias") {
  // Mean over trials; the sampling spread (sd ~ sigma2 sqrt(2/m)) is far
  // larger than the bias, so the comparison is made in expectation.
  const double sigma2 = 2.0;
  const int m = 20, trials = 4000;
  double plain = 0.0, classical = 0.0, iterative = 0.0;
  for (int t = 0; t < trials; ++t) {
    const toy::Estimates e = toy::trial(sigma2, m, 10, 5, RngStream(31).child(t));
    plain += e.plain;
    classical += e.classical;
    iterative += e.iterative;
  }
  plain /= trials;
  classical /= trials;
  iterative /= trials;
  CHECK(plain - sigma2 == doctest::Approx(-sigma2 / m).epsilon(0.5));
  CHECK(std::abs(classical - sigma2) < std::abs(plain - sigma2));
  CHECK(std::abs(iterative - sigma2) < std::abs(plain - sigma2));
}

TEST_CASE("debias: reproducible across thread counts, bookkeeping adds up") {
  const Fixture f = make_fixture();
  BootstrapConfig cfg;
  cfg.B = 4;
  cfg.C = 2;
  cfg.seed = 77;
  set_thread_count(1);
  const DebiasResult a = iterative_bootstrap_debias(f.ds.counts, f.fit, cfg, f.opts);
  set_thread_count(8);
  const DebiasResult b = iterative_bootstrap_debias(f.ds.counts, f.fit, cfg, f.opts);
  set_thread_count(0);
  CHECK(a.V_tilde == b.V_tilde);
  CHECK(a.succeeded_level1 + a.failed_level1 == cfg.B);
  CHECK(a.succeeded_level2 + a.failed_level2 == cfg.B * cfg.C);
  CHECK(a.level1.size() == 4);
  CHECK(a.level2.size() == 8);
  CHECK(a.V_tilde.allFinite());
}

TEST_CASE("debias: with no failures the result is the plain combination") {
  const Fixture f = make_fixture();
  BootstrapConfig cfg;
  cfg.B = 3;
  cfg.C = 2;
  cfg.seed = 5;
  const DebiasResult r = iterative_bootstrap_debias(f.ds.counts, f.fit, cfg, f.opts);
  REQUIRE(r.failed_level1 + r.failed_level2 == 0);
  std::vector<Eigen::MatrixXd> l1, l2;
  for (const auto& v : r.level1) l1.push_back(*v);
  for (const auto& v : r.level2) l2.push_back(*v);
  CHECK(r.V_tilde == iterative_combine(Eigen::MatrixXd(f.fit.V), l1, l2));

  BootstrapConfig cc;
  cc.mode = BootstrapMode::classical;
  cc.B = 5;
  cc.seed = 5;
  const DebiasResult c = classical_bootstrap_debias(f.ds.counts, f.fit, cc, f.opts);
  std::vector<Eigen::MatrixXd> c1;
  for (const auto& v : c.level1) c1.push_back(*v);
  CHECK(c.V_tilde == classical_combine(Eigen::MatrixXd(f.fit.V), c1));
  CHECK(c.level2.empty());
}

TEST_CASE("configuration errors") {
  const Fixture f = make_fixture();
  BootstrapConfig cfg;
  cfg.B = 0;
  CHECK_THROWS_AS(iterative_bootstrap_debias(f.ds.counts, f.fit, cfg, f.opts), Error);
  cfg.B = 2;
  cfg.mode = BootstrapMode::classical;
  CHECK_THROWS_AS(iterative_bootstrap_debias(f.ds.counts, f.fit, cfg, f.opts), Error);
}

}  // TEST_SUITE
