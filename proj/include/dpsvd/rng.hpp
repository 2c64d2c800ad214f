#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <vector>

namespace dpsvd {

/// Hierarchical random stream identifier. A stream is fully determined by
/// its seed and path, e.g. (replicate, level-1 index, level-2 index), so the
/// draws seen by a job never depend on which thread runs it or when.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}
  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
      : seed_(seed), path_(path) {}

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::uint64_t>& path() const { return path_; }

  RngStream child(std::uint64_t index) const {
    RngStream s = *this;
    s.path_.push_back(index);
    return s;
  }

  // 64-bit key mixing the seed, the path length and every path element.
  std::uint64_t key() const;

 private:
  std::uint64_t seed_;
  std::vector<std::uint64_t> path_;
};

/// xoshiro256** seeded from a stream key via splitmix64. Satisfies
/// UniformRandomBitGenerator; the samplers below are self-contained so the
/// output is identical across standard library implementations.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(const RngStream& stream) : Rng(stream.key()) {}
  explicit Rng(std::uint64_t key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Poisson(lambda); lambda must be finite and >= 0.
  std::uint64_t poisson(double lambda);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace dpsvd
