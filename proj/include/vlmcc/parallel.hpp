#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace vlmcc {

// Runs fn(0..n-1) across up to `jobs` worker threads, work-stealing by
// atomic index.  Callers slot results by index and fold afterwards in
// index order, so the thread count never changes an outcome.  fn must not
// throw (wrap per-item failures into the result slot instead).
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t)>& fn) {
  const int capped = std::clamp(jobs, 1, 64);
  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(capped), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (std::thread& th : pool) th.join();
}

}  // namespace vlmcc
