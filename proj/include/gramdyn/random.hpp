#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace gramdyn {

// Counter-based random streams: every draw is a pure function of
// (seed, stream, counter), so results never depend on evaluation order
// or thread scheduling. Mixing is splitmix64.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL))) {}

  std::uint64_t bits(std::uint64_t counter) const { return mix64(key_ ^ mix64(counter)); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on two consecutive counters.
  double normal(std::uint64_t counter) const {
    const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

// Sequential convenience wrapper over a counter stream.
class SequentialRng {
 public:
  SequentialRng(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}

  double uniform() { return rng_.uniform(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return rng_.normal(counter_++); }
  std::uint64_t below(std::uint64_t n) { return rng_.bits(counter_++) % n; }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace gramdyn
