#pragma once

#include <cstddef>
#include <functional>

namespace adeki {

/// Upper bound on worker threads used by parallel_for. Defaults to 1.
void set_max_threads(unsigned n) noexcept;
unsigned max_threads() noexcept;

/// Runs body(i) for i in [0, n). Each index is handled by exactly one
/// worker; callers write results into per-index slots so output does not
/// depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace adeki
