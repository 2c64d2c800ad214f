#pragma once

#include <cmath>
#include <vector>

#include "dpsvd/bootstrap.hpp"
#include "dpsvd/rng.hpp"

// Divide-by-m variance of N(mean, sigma2) samples; its bias is exactly
// -sigma2 / m, so corrected estimators can be checked against the truth.
namespace toy {

struct Normal {
  double mean = 0.0;
  double var = 1.0;
  Normal operator+(const Normal& o) const { return {mean + o.mean, var + o.var}; }
  Normal operator-(const Normal& o) const { return {mean - o.mean, var - o.var}; }
  Normal operator*(double s) const { return {mean * s, var * s}; }
};

inline Normal estimate(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return {m, s / static_cast<double>(x.size())};
}

inline std::vector<double> draw(const Normal& p, int m, dpsvd::Rng& r) {
  std::vector<double> x(static_cast<std::size_t>(m));
  const double sd = std::sqrt(p.var);
  for (double& v : x) v = p.mean + sd * r.normal();
  return x;
}

struct Refit {
  int m;
  dpsvd::Replicate<Normal> operator()(const Normal& generator,
                                      const dpsvd::RngStream& stream) const {
    dpsvd::Rng r(stream);
    return {estimate(draw(generator, m, r)), {}};
  }
};

struct Estimates {
  double plain;
  double classical;
  double iterative;
};

// One Monte Carlo trial: data from N(0, sigma2), then classical (B + B C
// single-level draws, matched cost) and iterative (B, C) corrections.
inline Estimates trial(double sigma2, int m, int B, int C,
                       const dpsvd::RngStream& stream) {
  dpsvd::Rng r(stream.child(0));
  const Normal est = estimate(draw({0.0, sigma2}, m, r));
  const auto nested =
      dpsvd::run_nested_bootstrap(est, Refit{m}, B, C, stream.child(1));
  std::vector<Normal> l1, l2;
  for (const auto& rep : nested.level1) l1.push_back(*rep.model);
  for (const auto& row : nested.level2)
    for (const auto& rep : row) l2.push_back(*rep.model);
  const auto single = dpsvd::run_nested_bootstrap(est, Refit{m}, B + B * C, 0,
                                                   stream.child(2));
  std::vector<Normal> c1;
  for (const auto& rep : single.level1) c1.push_back(*rep.model);
  return {est.var, dpsvd::classical_combine(est, c1).var,
          dpsvd::iterative_combine(est, l1, l2).var};
}

}  // namespace toy
