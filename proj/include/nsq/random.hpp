#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace nsq {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`. Distinct (master, index) pairs give
/// unrelated streams, so trials can run in any order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

/// Unbiased integer in [0, bound) by rejection. Kept out of
/// std::uniform_int_distribution so index draws do not depend on the
/// standard library's implementation.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % bound));
  std::uint64_t r = rng();
  while (r >= limit) r = rng();
  return r % bound;
}

inline int random_sign(Rng& rng) { return (rng() >> 63) ? 1 : -1; }

inline std::vector<double> gaussian_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> g(n);
  for (auto& x : g) x = normal(rng);
  return g;
}

/// Uniform random subset of {0..n-1} of size k, returned sorted.
inline std::vector<std::size_t> random_subset(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace nsq
