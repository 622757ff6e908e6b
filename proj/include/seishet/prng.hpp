#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace seishet {

// Counter-based SplitMix64 stream.
//
//   next():   counter += 0x9E3779B97F4A7C15; return mix64(counter)
//   mix64(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//             z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//             return z ^ (z >> 31)
//   derive(seed, index) = Prng(mix64(seed ^ mix64(index ^ 0x6A09E667F3BCC909)))
//
// Period 2^64. Only integer arithmetic feeds the stream, so the u64 sequence
// is identical on every platform. uniform() takes the top 53 bits.
class Prng {
 public:
  static constexpr std::uint64_t kIncrement = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kDeriveSalt = 0x6A09E667F3BCC909ULL;

  explicit constexpr Prng(std::uint64_t seed = 0) noexcept : counter_(seed) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr Prng derive(std::uint64_t seed, std::uint64_t index) noexcept {
    return Prng(mix64(seed ^ mix64(index ^ kDeriveSalt)));
  }

  constexpr std::uint64_t next_u64() noexcept {
    counter_ += kIncrement;
    return mix64(counter_);
  }

  // [0, 1)
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Inclusive range, unbiased by rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
    if (hi <= lo) return lo;
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return lo + static_cast<std::int64_t>(r % range);
  }

  // Box-Muller, one variate per call.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t state() const noexcept { return counter_; }

 private:
  std::uint64_t counter_;
};

}  // namespace seishet
