#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace jflow {

/// Worker cap: JFLOW_THREADS if set (>= 1), otherwise hardware concurrency.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("JFLOW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return static_cast<unsigned>(std::min<long>(v, 1024));
  }
  return hw;
}

/// Calls fn(i) for i in [0, count). Work is split into contiguous chunks; fn
/// must only write to slots owned by i. Small ranges run inline. The first
/// exception thrown by any chunk is rethrown after all workers have joined.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn, std::size_t min_parallel = 1u << 14) {
  const unsigned workers = worker_count();
  if (workers <= 1 || count < min_parallel) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(workers, count);
  const std::size_t chunk = (count + chunks - 1) / chunks;
  std::vector<std::exception_ptr> errors(chunks);
  {
    std::vector<std::jthread> pool;
    pool.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t lo = c * chunk;
      const std::size_t hi = std::min(count, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([lo, hi, c, &fn, &errors] {
        try {
          for (std::size_t i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Fixed-order pairwise summation; the result does not depend on the worker count.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kLeaf = 64;
  if (v.size() <= kLeaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace jflow
