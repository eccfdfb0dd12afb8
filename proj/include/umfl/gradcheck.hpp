#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "umfl/autodiff.hpp"

namespace umfl {

using TapeFunction = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Largest per-input relative error between the tape gradient of a scalar
/// function and central differences with step 1e-5 * max(1, |theta|).
/// Per input tensor the error is max|analytic - numeric| / max(max|analytic|, max|numeric|).
double gradient_error(const TapeFunction& f, const std::vector<Tensor<double>>& inputs);

struct GradCheckResult {
  std::string name;
  int points = 0;
  double max_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

/// Every primitive and every loss, each at `points` random non-degenerate points.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, int points);

}  // namespace umfl
