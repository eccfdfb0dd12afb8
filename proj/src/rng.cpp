#include "umfl/rng.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "umfl/errors.hpp"

namespace umfl {

double uniform_f64(RandomSource& rng, double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw PreconditionError("uniform_f64: requires finite lo < hi, got [" + std::to_string(lo) +
                            ", " + std::to_string(hi) + ")");
  }
  const double unit = static_cast<double>(rng.next_u64() >> 11) * 0x1.0p-53;
  const double value = lo + unit * (hi - lo);
  // lo + unit*(hi-lo) can round up to hi when the span is tiny relative to lo.
  return value < hi ? value : std::nextafter(hi, lo);
}

std::int64_t uniform_int(RandomSource& rng, std::int64_t lo, std::int64_t hi) {
  if (lo > hi) {
    throw PreconditionError("uniform_int: lo > hi (" + std::to_string(lo) + " > " +
                            std::to_string(hi) + ")");
  }
  if (lo == hi) return lo;
  const std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  if (range == 0) {  // full 64-bit span
    return static_cast<std::int64_t>(rng.next_u64());
  }
  // Reject the lowest (2^64 mod range) words so every residue is equally likely.
  const std::uint64_t threshold = (0 - range) % range;
  std::uint64_t x = rng.next_u64();
  while (x < threshold) x = rng.next_u64();
  return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + x % range);
}

bool bernoulli(RandomSource& rng, double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw PreconditionError("bernoulli: p must lie in [0, 1], got " + std::to_string(p));
  }
  return uniform_f64(rng, 0.0, 1.0) < p;
}

double standard_normal(RandomSource& rng) {
  const double u1 = uniform_f64(rng, 0.0, 1.0);
  const double u2 = uniform_f64(rng, 0.0, 1.0);
  const double radius = std::sqrt(-2.0 * std::log1p(-u1));  // 1 - u1 is in (0, 1]
  return radius * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t parse_seed(const std::string& text) {
  std::string_view digits = text;
  int base = 10;
  if (digits.starts_with("0x") || digits.starts_with("0X")) {
    digits.remove_prefix(2);
    base = 16;
  }
  std::uint64_t value = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value, base);
  if (digits.empty() || ec != std::errc{} || end != digits.data() + digits.size()) {
    throw ConfigError("seed: not a decimal or 0x-hex 64-bit integer: '" + text + "'");
  }
  return value;
}

}  // namespace umfl
