#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, counter), so parallel workers never share generator state and the
// stream is identical on every platform (no std:: distributions involved).

#include <cmath>
#include <cstdint>
#include <numbers>

namespace reaffirm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for sub-stream `stream` of `seed`.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
}

/// Uniform in [0, 1) from the top 53 bits.
inline constexpr double unit_double(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed = 0) noexcept : seed_(splitmix64(seed)) {}

  constexpr std::uint64_t next_u64() noexcept { return splitmix64(seed_ ^ splitmix64(counter_++)); }

  constexpr double uniform() noexcept { return unit_double(next_u64()); }
  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Box-Muller; uses two draws per call so the counter stays predictable.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace reaffirm
