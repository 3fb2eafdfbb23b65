#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace adeki {

/// Seeded random stream. Substreams are derived deterministically from the
/// parent seed and a tag path, so parallel tasks never share state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent stream keyed by (seed, tags...). Does not advance *this.
  Rng substream(std::initializer_list<std::uint64_t> tags) const;
  Rng substream(std::uint64_t tag) const { return substream({tag}); }

  double normal();
  double uniform();  // [0, 1)
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace adeki
