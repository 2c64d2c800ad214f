#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dpsvd/error.hpp"
#include "dpsvd/io.hpp"
#include "dpsvd/sim.hpp"

using namespace dpsvd;

namespace {

std::string csv(const ResultTable& rows) {
  std::ostringstream os;
  write_results(os, rows);
  return os.str();
}

const ResultRow* find(const ResultTable& rows, int rep, const std::string& stage,
                      const std::string& metric) {
  for (const auto& r : rows)
    if (r.replicate == rep && r.stage == stage && r.metric == metric) return &r;
  return nullptr;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("stage parsing") {
  const Stages s = parse_stages("ib, simex firth");
  CHECK(s.psvd);
  CHECK(s.ib);
  CHECK(s.simex);
  CHECK(s.firth);
  CHECK_FALSE(s.classical_bs);
  CHECK(parse_stages(to_string(s)).simex);
  CHECK_THROWS_AS(parse_stages("psvd bogus"), Error);
}

TEST_CASE("config grid expands in order") {
  const auto cells = parse_scenarios(R"(
# comment
[scenario]
name = grid
d = 50, 200
c = -2, 0
replicates = 3
stages = psvd ib
[scenario]
name = single
score_variances = 4 1
k_true = 2
k_fit = 2
)");
  REQUIRE(cells.size() == 5);
  CHECK(cells[0].id == "grid/d=50/c=-2");
  CHECK(cells[1].id == "grid/d=50/c=0");
  CHECK(cells[2].id == "grid/d=200/c=-2");
  CHECK(cells[2].d == 200);
  CHECK(cells[3].mu_center == 0.0);
  CHECK(cells[3].replicates == 3);
  CHECK(cells[3].stages.ib);
  CHECK(cells[4].k_true == 2);
  CHECK(cells[4].score_variances == std::vector<double>{4.0, 1.0});
  CHECK_THROWS_AS(parse_scenarios("[scenario]\nnope = 1\n"), Error);
  CHECK_THROWS_AS(parse_scenarios("[scenario]\nd = -3\n"), Error);
}

TEST_CASE("spec hash follows the content") {
  ScenarioSpec a, b;
  CHECK(spec_hash(a) == spec_hash(b));
  b.d = 51;
  CHECK(spec_hash(a) != spec_hash(b));
  b = a;
  b.seed = 2;
  CHECK(spec_hash(a) != spec_hash(b));
}

TEST_CASE("generated data has the requested structure") {
  ScenarioSpec s;
  s.n = 30;
  s.d = 12;
  s.k_true = 2;
  s.k_fit = 2;
  s.score_variances = {4.0, 1.0};
  const Dataset ds = generate_dataset(s, 0, RngStream(3));
  CHECK(ds.counts.rows() == 30);
  CHECK(ds.counts.cols() == 12);
  CHECK((ds.truth.V.transpose() * ds.truth.V)
            .isApprox(Eigen::Matrix2d::Identity(), 1e-10));
  CHECK(natural_parameters(ds.truth).isApprox(ds.theta, 1e-10));
}

TEST_CASE("scenario runs are deterministic and thread-independent") {
  ScenarioSpec s;
  s.id = "det";
  s.n = 25;
  s.d = 12;
  s.mu_center = 0.0;
  s.replicates = 3;
  s.B = 2;
  s.C = 2;
  s.classical_B = 3;
  s.simex.replicates = 4;
  s.stages = parse_stages("psvd ib classical-bs simex firth");
  set_thread_count(1);
  const ResultTable a = run_scenario(s);
  set_thread_count(8);
  const ResultTable b = run_scenario(s);
  set_thread_count(0);
  CHECK(csv(a) == csv(b));

  const ResultTable one = run_scenario(s, {1});
  ResultTable from_full;
  for (const auto& r : a)
    if (r.replicate == 1) from_full.push_back(r);
  CHECK(csv(one) == csv(from_full));

  for (int rep = 0; rep < 3; ++rep) {
    CHECK(find(a, rep, "psvd", "alignment") != nullptr);
    CHECK(find(a, rep, "ib", "alignment") != nullptr);
    CHECK(find(a, rep, "classical-bs", "alignment") != nullptr);
    CHECK(find(a, rep, "psvd+firth", "allzero_rows") != nullptr);
    CHECK(find(a, rep, "classical-bs+simex", "sigma2") != nullptr);
    CHECK(find(a, rep, "classical-bs+simex+firth", "score_rmse") != nullptr);
  }
}

}  // TEST_SUITE
