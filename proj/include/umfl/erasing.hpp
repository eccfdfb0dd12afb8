#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "umfl/image.hpp"
#include "umfl/rng.hpp"

namespace umfl {

/// What erased pixels become.
enum class FillPolicy { zero, mean, random_uniform };

FillPolicy parse_fill_policy(const std::string& name);
std::string to_string(FillPolicy policy);

/// Random Erasing parameters.
struct ReConfig {
  double probability = 0.5;
  double s_l = 0.05;  ///< area-ratio bounds
  double s_h = 0.4;
  double r_1 = 0.3;  ///< aspect-ratio bounds
  double r_2 = 0.33;
  FillPolicy fill = FillPolicy::mean;
  int max_attempts = 100;

  void validate() const;
};

/// Batch-constant Erasing parameters: stripe count s is drawn from [s_min, s_max].
struct BceConfig {
  int s_min = 6;
  int s_max = 8;
  FillPolicy fill = FillPolicy::mean;

  void validate() const;
};

struct EraseRegion {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  /// The draws that produced the region; target area before rounding is
  /// area_ratio * image area.
  double area_ratio = 0.0;
  double aspect = 0.0;

  bool contains(int row, int col) const noexcept {
    return row >= top && row < top + height && col >= left && col < left + width;
  }
};

/// Rejection-samples an RE rectangle. Per attempt the draw order is
/// (area ratio, aspect), then (top, left) only when the rectangle fits.
std::optional<EraseRegion> sample_re_region(RandomSource& rng, const ReConfig& cfg, int img_h, int img_w);

/// Overwrites the region (all channels) according to the policy. random_uniform
/// draws one U(0,1) per pixel-channel in row-major order.
void erase_region(Image& image, const EraseRegion& region, FillPolicy fill,
                  const Eigen::VectorXd& fill_value, RandomSource& rng);

/// Erases every row of `band`, full width.
void erase_rows(Image& image, RowBand band, FillPolicy fill, const Eigen::VectorXd& fill_value,
                RandomSource& rng);

/// One bernoulli(probability) draw, then (on success) sample a region and erase it.
std::pair<Image, std::optional<EraseRegion>> apply_re(const Image& image, RandomSource& rng,
                                                      const ReConfig& cfg,
                                                      const Eigen::VectorXd& fill_value);

struct BceResult {
  std::vector<Image> images;
  int s = 0;
  int stripe_index = 0;
  RowBand band;
};

/// Draws s, then stripe_index, once; erases the same band in every image.
BceResult apply_bce_subbatch(std::span<const Image> images, RandomSource& rng, const BceConfig& cfg,
                             const Eigen::VectorXd& fill_value);

}  // namespace umfl
