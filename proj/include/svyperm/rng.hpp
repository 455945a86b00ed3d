#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace svyperm {

// Deterministic counter-seeded generator (splitmix64 core). Streams are
// derived by avalanche-mixing identifying integers into the seed, so draw t
// of a derived stream never depends on draws 0..t-1 of any other stream and
// parallel consumers stay order-independent. std::shuffle and the
// <random> distributions are implementation-defined across standard
// libraries, which is why sampling is done by hand here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static std::uint64_t avalanche(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Order-sensitive combination of two stream components.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = avalanche(a ^ 0x9E3779B97F4A7C15ull);
    return avalanche(z ^ b);
  }

  static Rng derive(std::uint64_t seed, std::uint64_t a) { return Rng(mix(seed, a)); }
  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return Rng(mix(mix(seed, a), b));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return avalanche(state_);
  }

  // [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, bound); Lemire multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < bound) {
      std::uint64_t threshold = -bound % bound;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * bound;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Marsaglia polar method. No spare caching: each call consumes a fresh
  // accepted pair, which keeps the draw count a pure function of the inputs.
  double normal(double mean, double sd) {
    double u, v, s;
    do {
      u = 2.0 * next_double() - 1.0;
      v = 2.0 * next_double() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return mean + sd * u * std::sqrt(-2.0 * std::log(s) / s);
  }

  // Fisher-Yates, high index downward.
  template <typename T>
  void shuffle(T* data, std::size_t n) {
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

  std::vector<std::uint32_t> permutation(std::size_t n) {
    std::vector<std::uint32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
    shuffle(idx.data(), n);
    return idx;
  }

 private:
  std::uint64_t state_;
};

// k distinct indices from [0, n_total), returned sorted ascending.
inline std::vector<std::uint32_t> sample_indices(std::size_t n_total, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> pool(n_total);
  for (std::size_t i = 0; i < n_total; ++i) pool[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < k && i + 1 < n_total; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n_total - i));
    std::uint32_t tmp = pool[i];
    pool[i] = pool[j];
    pool[j] = tmp;
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace svyperm
