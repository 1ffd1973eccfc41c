#pragma once

// Per-thread heap accounting. Counting only happens in programs that expand
// OCTOMESH_TRACK_ALLOCATIONS() in exactly one translation unit; elsewhere the
// counters stay at zero and tracking_enabled() is false.

#include <malloc.h>
#include <sys/resource.h>

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <new>

namespace octomesh::memory {

struct Counters {
  std::int64_t current;
  std::int64_t peak;
};

inline thread_local Counters tls_counters{0, 0};
inline std::atomic<bool> hooked{false};

inline void note_alloc(std::size_t n) noexcept {
  auto& c = tls_counters;
  c.current += static_cast<std::int64_t>(n);
  if (c.current > c.peak) c.peak = c.current;
}
inline void note_free(std::size_t n) noexcept { tls_counters.current -= static_cast<std::int64_t>(n); }

inline bool tracking_enabled() { return hooked.load(std::memory_order_relaxed); }

/// Peak bytes allocated by this thread above the level at construction. Frees of
/// memory allocated elsewhere can push the level below the start; the peak never drops.
class PeakScope {
public:
  PeakScope() : base_(tls_counters.current) { tls_counters.peak = tls_counters.current; }
  std::int64_t peak_bytes() const { return tls_counters.peak - base_; }

private:
  std::int64_t base_;
};

/// Process peak resident set size in bytes.
inline std::int64_t process_peak_rss() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<std::int64_t>(ru.ru_maxrss) * 1024;
}

inline void* tracked_malloc(std::size_t n) {
  void* p = std::malloc(n ? n : 1);
  if (!p) throw std::bad_alloc();
  note_alloc(malloc_usable_size(p));
  return p;
}
inline void tracked_free(void* p) noexcept {
  if (!p) return;
  note_free(malloc_usable_size(p));
  std::free(p);
}

}  // namespace octomesh::memory

#define OCTOMESH_TRACK_ALLOCATIONS()                                                                \
  void* operator new(std::size_t n) { return octomesh::memory::tracked_malloc(n); }                \
  void* operator new[](std::size_t n) { return octomesh::memory::tracked_malloc(n); }              \
  void* operator new(std::size_t n, const std::nothrow_t&) noexcept {                              \
    try {                                                                                          \
      return octomesh::memory::tracked_malloc(n);                                                  \
    } catch (...) {                                                                                \
      return nullptr;                                                                              \
    }                                                                                              \
  }                                                                                                \
  void* operator new[](std::size_t n, const std::nothrow_t& t) noexcept { return operator new(n, t); } \
  void operator delete(void* p) noexcept { octomesh::memory::tracked_free(p); }                    \
  void operator delete[](void* p) noexcept { octomesh::memory::tracked_free(p); }                  \
  void operator delete(void* p, std::size_t) noexcept { octomesh::memory::tracked_free(p); }       \
  void operator delete[](void* p, std::size_t) noexcept { octomesh::memory::tracked_free(p); }     \
  static const bool octomesh_allocation_hook_installed = [] {                                      \
    octomesh::memory::hooked = true;                                                               \
    return true;                                                                                   \
  }()
