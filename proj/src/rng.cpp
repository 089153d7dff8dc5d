#include "folilab/rng.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace folilab {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // Mix the pair through two rounds so neighbouring streams decorrelate.
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s ^= stream * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
  std::uint64_t b = splitmix64(s);
  return Rng(a ^ (b + 0x165667b19e3779f9ULL));
}

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Box-Muller; rejects u1 == 0 to keep log finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vec Rng::normal_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal();
  return v;
}

Vec Rng::unit_vec(int n) {
  while (true) {
    Vec v = normal_vec(n);
    const double norm = v.norm();
    if (norm > 1e-12) return v / norm;
  }
}

std::vector<Vec> deterministic_directions(int dim, int count) {
  std::vector<Vec> out;
  out.reserve(count);
  if (dim == 1) {
    for (int i = 0; i < count; ++i) {
      Vec v(1);
      v(0) = (i % 2 == 0) ? 1.0 : -1.0;
      out.push_back(v);
    }
    return out;
  }
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double a = 2.0 * M_PI * static_cast<double>(i) / count;
      Vec v(2);
      v << std::cos(a), std::sin(a);
      out.push_back(v);
    }
    return out;
  }
  if (dim == 3) {
    // Fibonacci sphere.
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (i + 0.5) / count;
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double a = golden * i;
      Vec v(3);
      v << r * std::cos(a), r * std::sin(a), z;
      out.push_back(v);
    }
    return out;
  }
  Rng rng(0x5eedD1f5u ^ static_cast<std::uint64_t>(dim));
  for (int i = 0; i < count; ++i) out.push_back(rng.unit_vec(dim));
  return out;
}

int thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("FOLILAB_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_budget(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace folilab
