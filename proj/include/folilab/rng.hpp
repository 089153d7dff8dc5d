#ifndef FOLILAB_RNG_HPP
#define FOLILAB_RNG_HPP

#include "folilab/types.hpp"

#include <cstdint>
#include <functional>

namespace folilab {

/// Deterministic, platform-independent random stream (splitmix64 core).
///
/// std::mt19937 with library distributions is not bit-stable across standard
/// library implementations, so every distribution used here is spelled out.
/// Seeding with (seed, stream) pairs gives independent per-sample streams so
/// Monte Carlo results do not depend on how work is split across threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Independent stream derived from (seed, stream index).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (no caching, for reproducibility).
  double normal();

  Vec normal_vec(int n);

  /// Uniform direction on the unit sphere of R^n.
  Vec unit_vec(int n);

 private:
  std::uint64_t state_;
};

/// Deterministic low-discrepancy directions on the unit sphere of R^dim:
/// {+1,-1} for dim 1, equispaced angles for dim 2, Fibonacci sphere for
/// dim 3, seeded-normal fallback above.
std::vector<Vec> deterministic_directions(int dim, int count);

/// Worker count: hardware concurrency capped by FOLILAB_THREADS.
int thread_budget();

/// Runs fn(i) for i in [0, n). Work items must be independent; outputs are
/// written to per-index slots by the caller, so the result does not depend on
/// the worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace folilab

#endif
