#pragma once

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pyraflow {

/// Worker count for row-parallel kernels. Defaults to 1; the LFN_THREADS
/// environment variable raises the cap. Results are bit-identical for any
/// thread count: work is split into disjoint index ranges and every element
/// is accumulated by exactly one worker in a fixed order.
inline int worker_count() {
  static const int n = [] {
    const char* env = std::getenv("LFN_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    if (v < 1) return 1;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    return hw > 0 && v > hw ? hw : v;
  }();
  return n;
}

/// Runs fn(begin, end) over [0, total) split across workers. Falls back to an
/// inline call when only one worker is configured or the range is small.
inline void parallel_for(int64_t total, const std::function<void(int64_t, int64_t)>& fn) {
  const int n = worker_count();
  if (n <= 1 || total < 2) {
    fn(0, total);
    return;
  }
  const int used = static_cast<int>(std::min<int64_t>(n, total));
  const int64_t chunk = (total + used - 1) / used;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(used - 1));
  for (int i = 1; i < used; ++i) {
    int64_t b = i * chunk;
    int64_t e = std::min(total, b + chunk);
    if (b >= e) break;
    threads.emplace_back(fn, b, e);
  }
  fn(0, std::min(total, chunk));
  for (auto& t : threads) t.join();
}

} // namespace pyraflow
