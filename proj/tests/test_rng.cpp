#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "dpsvd/parallel.hpp"
#include "dpsvd/rng.hpp"

using namespace dpsvd;

TEST_SUITE("rng") {

TEST_CASE("same seed and path give the same sequence") {
  Rng a(RngStream(42).child(3).child(1));
  Rng b(RngStream(42, {3, 1}));
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
}

TEST_CASE("keys differ across seeds, paths and path lengths") {
  std::set<std::uint64_t> keys;
  keys.insert(RngStream(1).key());
  keys.insert(RngStream(2).key());
  keys.insert(RngStream(1).child(0).key());
  keys.insert(RngStream(1).child(1).key());
  keys.insert(RngStream(1).child(0).child(0).key());
  keys.insert(RngStream(1, {1, 0}).key());
  keys.insert(RngStream(1, {0, 1}).key());
  CHECK(keys.size() == 7);
}

TEST_CASE("uniform stays in [0, 1) with mean 1/2") {
  Rng r(7);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal moments") {
  Rng r(11);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 0.01);
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson mean and variance match lambda") {
  for (double lambda : {0.05, 0.7, 3.0, 25.0, 400.0}) {
    Rng r(RngStream(5).child(static_cast<std::uint64_t>(lambda * 100)));
    const int n = 100000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = static_cast<double>(r.poisson(lambda));
      s1 += x;
      s2 += x * x;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    // Five standard errors of the sample mean.
    CHECK(std::abs(mean - lambda) < 5.0 * std::sqrt(lambda / n));
    CHECK(var == doctest::Approx(lambda).epsilon(0.05));
  }
  Rng r(1);
  CHECK(r.poisson(0.0) == 0);
}

TEST_CASE("below covers its range") {
  Rng r(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.below(6);
    REQUIRE(v < 6);
    seen.insert(v);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("parallel_for output does not depend on the thread count") {
  auto run = [](std::size_t threads) {
    set_thread_count(threads);
    std::vector<std::uint64_t> out(64);
    parallel_for(out.size(), [&](std::size_t i) {
      Rng r(RngStream(9).child(i));
      out[i] = r();
    });
    set_thread_count(0);
    return out;
  };
  CHECK(run(1) == run(8));
}

TEST_CASE("parallel_for rethrows a job exception") {
  CHECK_THROWS_AS(parallel_for(10,
                               [](std::size_t i) {
                                 if (i == 7) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

}  // TEST_SUITE
