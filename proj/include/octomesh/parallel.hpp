#pragma once

// Minimal worker pool: indexed tasks pulled from a shared counter.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace octomesh {

/// Worker count from OCTOMESH_WORKERS when set and positive, else `fallback`.
inline unsigned workers_from_env(unsigned fallback) {
  if (const char* s = std::getenv("OCTOMESH_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    if (end != s && *end == '\0' && v > 0 && v <= 1024) return static_cast<unsigned>(v);
  }
  return fallback;
}

/// Runs fn(i, worker) for i in [0, n) on `workers` threads. Task order per worker is
/// unspecified; the first exception thrown is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& fn) {
  workers = std::max(1u, workers);
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i, 0u);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&](unsigned w) {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned used = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  pool.reserve(used);
  for (unsigned w = 0; w < used; ++w) pool.emplace_back(body, w);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace octomesh
