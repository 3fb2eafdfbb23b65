#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace adeki {

/// Process-wide byte counter for buffers allocated through TrackedAllocator.
/// Only the numeric buffers of the solver and the gradient engine are
/// instrumented, which keeps peak measurements deterministic across runs.
class MemoryTracker {
 public:
  static void on_allocate(std::size_t bytes) noexcept;
  static void on_deallocate(std::size_t bytes) noexcept;
  static std::size_t current() noexcept;
  static std::size_t peak() noexcept;
  /// Sets the peak to the current level and returns that level.
  static std::size_t reset_peak() noexcept;
};

template <class T>
struct TrackedAllocator {
  using value_type = T;

  TrackedAllocator() noexcept = default;
  template <class U>
  TrackedAllocator(const TrackedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    MemoryTracker::on_allocate(n * sizeof(T));
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::on_deallocate(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackedAllocator<U>&) const noexcept { return true; }
};

using TrackedBuffer = std::vector<double, TrackedAllocator<double>>;

/// Accounts for bytes held outside tracked buffers (e.g. Eigen matrices kept
/// as checkpoints) for the lifetime of the guard.
class TrackedBytes {
 public:
  TrackedBytes() = default;
  explicit TrackedBytes(std::size_t bytes) { add(bytes); }
  TrackedBytes(const TrackedBytes&) = delete;
  TrackedBytes& operator=(const TrackedBytes&) = delete;
  ~TrackedBytes() { MemoryTracker::on_deallocate(bytes_); }

  void add(std::size_t bytes) noexcept {
    MemoryTracker::on_allocate(bytes);
    bytes_ += bytes;
  }
  std::size_t bytes() const noexcept { return bytes_; }

 private:
  std::size_t bytes_ = 0;
};

}  // namespace adeki
