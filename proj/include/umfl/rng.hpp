#pragma once

#include <cstdint>
#include <string>

namespace umfl {

/// Source of raw 64-bit words. Every stochastic routine in the library draws
/// through this interface so tests can substitute scripted sequences.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual std::uint64_t next_u64() = 0;
};

/// splitmix64 (Steele, Lea, Flood 2014).
class SplitMix64 final : public RandomSource {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  /// Added to the parent's output to seed a forked child.
  static constexpr std::uint64_t kForkOffset = 0xD1B54A32D192ED03ULL;

  explicit constexpr SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() override { return mix(state_ += kGolden); }

  /// Consumes one output of this stream and seeds an independent child from it.
  SplitMix64 fork() { return SplitMix64(next_u64() + kForkOffset); }

  std::uint64_t state() const noexcept { return state_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// lo + (next_u64 >> 11) * 2^-53 * (hi - lo), in [lo, hi).
double uniform_f64(RandomSource& rng, double lo, double hi);

/// Unbiased integer in [lo, hi] by rejection sampling. A degenerate range
/// returns lo without consuming a draw.
std::int64_t uniform_int(RandomSource& rng, std::int64_t lo, std::int64_t hi);

/// true iff uniform_f64(0, 1) < p.
bool bernoulli(RandomSource& rng, double p);

/// Standard normal via Box-Muller; consumes exactly two draws.
double standard_normal(RandomSource& rng);

/// Parses a decimal or 0x-prefixed hexadecimal 64-bit seed.
std::uint64_t parse_seed(const std::string& text);

}  // namespace umfl
