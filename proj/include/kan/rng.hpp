#pragma once

#include <cmath>
#include <cstdint>

namespace kan {

// Counter-based generator: every draw is a pure function of (seed, index), so
// parallel fills and Monte Carlo shards stay deterministic regardless of
// thread count. Mixing is splitmix64.
struct CounterRng {
  std::uint64_t seed = 0;

  explicit CounterRng(std::uint64_t s = 0) : seed(s) {}

  std::uint64_t bits(std::uint64_t index) const {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in (0, 1]
  double uniform(std::uint64_t index) const {
    return (double(bits(index) >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(std::uint64_t index, double lo, double hi) const {
    return lo + (hi - lo) * uniform(index);
  }

  // standard normal via Box-Muller; consumes indices 2*index and 2*index+1
  double normal(std::uint64_t index) const {
    double u1 = uniform(2 * index);
    double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // derive an independent stream (for per-op / per-layer seeding)
  CounterRng fork(std::uint64_t stream) const {
    return CounterRng(bits(0xa5a5a5a5a5a5a5a5ULL ^ stream));
  }
};

}  // namespace kan
