#include "adeki/memory.hpp"

#include <atomic>

namespace adeki {
namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

void MemoryTracker::on_allocate(std::size_t bytes) noexcept {
  const std::size_t now = g_current.fetch_add(bytes) + bytes;
  std::size_t prev = g_peak.load();
  while (now > prev && !g_peak.compare_exchange_weak(prev, now)) {
  }
}

void MemoryTracker::on_deallocate(std::size_t bytes) noexcept { g_current.fetch_sub(bytes); }

std::size_t MemoryTracker::current() noexcept { return g_current.load(); }

std::size_t MemoryTracker::peak() noexcept { return g_peak.load(); }

std::size_t MemoryTracker::reset_peak() noexcept {
  const std::size_t now = g_current.load();
  g_peak.store(now);
  return now;
}

}  // namespace adeki
