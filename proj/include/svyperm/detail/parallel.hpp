#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace svyperm::detail {

// Runs fn(t) for t in [0, m), fn taken by value so every worker owns its
// captured scratch. Callers make each index self-contained (derived RNG
// streams, slot-indexed writes), so the partition cannot affect results.
template <typename Fn>
void parallel_for(std::uint64_t m, unsigned threads, Fn fn) {
  if (threads <= 1 || m < 2) {
    for (std::uint64_t t = 0; t < m; ++t) fn(t);
    return;
  }
  const unsigned T = static_cast<unsigned>(std::min<std::uint64_t>(threads, m));
  std::vector<std::exception_ptr> errors(T);
  std::vector<std::thread> pool;
  pool.reserve(T);
  const std::uint64_t chunk = (m + T - 1) / T;
  for (unsigned k = 0; k < T; ++k) {
    pool.emplace_back([fn, k, chunk, m, &errors]() mutable {
      const std::uint64_t lo = static_cast<std::uint64_t>(k) * chunk;
      const std::uint64_t hi = std::min<std::uint64_t>(lo + chunk, m);
      try {
        for (std::uint64_t t = lo; t < hi; ++t) fn(t);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace svyperm::detail
