#ifndef ACRLB_RNG_HPP
#define ACRLB_RNG_HPP

#include <cstdint>
#include <limits>

namespace acrlb {

// SplitMix64 constants (Steele, Lea & Flood 2014; finalizer variant by Stafford).
inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kMixMul1 = 0xBF58476D1CE4E5B9ULL;
inline constexpr std::uint64_t kMixMul2 = 0x94D049BB133111EBULL;

/// SplitMix64 finalizer: a bijective 64-bit avalanche mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * kMixMul1;
  z = (z ^ (z >> 27)) * kMixMul2;
  return z ^ (z >> 31);
}

/// Child seed for stream `stream` of `seed`: mix64(seed + kGoldenGamma * (stream + 1)).
constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(seed + kGoldenGamma * (stream + 1));
}

constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return mix(mix(seed, a), b);
}

/// Counter-based generator: the i-th output (i = 1, 2, ...) is mix64(seed + i * kGoldenGamma).
/// Satisfies UniformRandomBitGenerator. Held by value, so copies replay the same stream.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept { return mix64(seed_ + kGoldenGamma * ++counter_); }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace acrlb

#endif  // ACRLB_RNG_HPP
