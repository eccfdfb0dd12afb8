#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "umfl/rng.hpp"

namespace umfl::testing {

/// Replays a fixed word sequence and counts draws.
class ScriptedSource final : public RandomSource {
 public:
  explicit ScriptedSource(std::vector<std::uint64_t> words) : words_(words.begin(), words.end()) {}
  std::uint64_t next_u64() override {
    if (words_.empty()) throw std::logic_error("scripted source exhausted");
    ++draws;
    const std::uint64_t w = words_.front();
    words_.pop_front();
    return w;
  }
  std::size_t remaining() const { return words_.size(); }
  int draws = 0;

 private:
  std::deque<std::uint64_t> words_;
};

/// Word that makes uniform_f64(0, 1) return exactly u (u a multiple of 2^-53).
inline std::uint64_t word_for_unit(double u) {
  return static_cast<std::uint64_t>(std::ldexp(u, 53)) << 11;
}

/// Word whose uniform_f64(lo, hi) lands within 2^-53 (hi - lo) below `value`.
inline std::uint64_t word_for(double value, double lo, double hi) {
  const double u = (value - lo) / (hi - lo);
  return static_cast<std::uint64_t>(std::ceil(std::ldexp(u, 53))) << 11;
}

/// Reference splitmix64, written from the published recurrence.
inline std::uint64_t reference_splitmix(std::uint64_t& s) {
  s += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using Points = std::vector<std::vector<double>>;

inline double euclid(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

/// Mean over anchors of the worst per-triplet value f(d_ap - d_an) across every
/// valid (positive, negative) pair. f must be increasing, so the worst triplet
/// is the hardest one.
template <typename F>
double brute_force_triplet(const Points& z, const std::vector<int>& labels, F f) {
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double worst = -INFINITY;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (labels[q] == labels[a]) continue;
        worst = std::max(worst, f(euclid(z[a], z[p]) - euclid(z[a], z[q])));
      }
    }
    if (!std::isfinite(worst)) throw std::logic_error("anchor without triplet");
    total += worst;
  }
  return total / static_cast<double>(n);
}

inline double oracle_softplus(double x) { return std::log1p(std::exp(x)); }

inline double oracle_hinge(const Points& z, const std::vector<int>& labels, double margin) {
  return brute_force_triplet(z, labels, [margin](double x) { return std::max(x + margin, 0.0); });
}

inline double oracle_soft(const Points& z, const std::vector<int>& labels) {
  return brute_force_triplet(z, labels, [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); });
}

/// Mean of -(1-p)^g log p over negative pairs i < j, p = 2/(1+e^{-a d}) - 1.
inline double oracle_focal(const Points& z, const std::vector<int>& labels, double alpha, double gamma) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      if (labels[i] == labels[j]) continue;
      const double p = 2.0 / (1.0 + std::exp(-alpha * euclid(z[i], z[j]))) - 1.0;
      sum += -std::pow(1.0 - p, gamma) * std::log(std::max(p, 1e-12));
      ++count;
    }
  return sum / count;
}

/// Mean softmax cross-entropy over rows.
inline double oracle_cross_entropy(const Points& logits, const std::vector<int>& labels) {
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double mx = *std::max_element(logits[i].begin(), logits[i].end());
    double z = 0.0;
    for (double v : logits[i]) z += std::exp(v - mx);
    sum += std::log(z) + mx - logits[i][static_cast<std::size_t>(labels[i])];
  }
  return sum / static_cast<double>(logits.size());
}

}  // namespace umfl::testing
