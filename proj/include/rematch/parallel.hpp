#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rematch {

/// Thread count used when a caller passes 0.
inline int default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs f(begin, end) over contiguous chunks of [0, n). Chunks are fixed by n
/// and the thread count, so per-index results never depend on scheduling.
/// The first exception thrown by any chunk is rethrown on the caller.
template <class F> void parallel_for(int n, int threads, F &&f) {
  if (threads <= 0) threads = default_threads();
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    if (n > 0) f(0, n);
    return;
  }
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    const int b = static_cast<int>(static_cast<long long>(n) * t / threads);
    const int e = static_cast<int>(static_cast<long long>(n) * (t + 1) / threads);
    pool.emplace_back([&, b, e] {
      try {
        f(b, e);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto &th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

} // namespace rematch
