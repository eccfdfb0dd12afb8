#include "umfl/erasing.hpp"

#include <cmath>

#include "umfl/errors.hpp"

namespace umfl {
namespace {

// A draw from [lo, hi] that still consumes one word when the range is degenerate,
// so the stream position never depends on configured bounds.
double draw_between(RandomSource& rng, double lo, double hi) {
  if (lo == hi) {
    rng.next_u64();
    return lo;
  }
  return uniform_f64(rng, lo, hi);
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

void check_fill(const Image& image, FillPolicy fill, const Eigen::VectorXd& fill_value) {
  if (fill != FillPolicy::mean) return;
  if (fill_value.size() != image.channels()) {
    throw PreconditionError("erasing: fill value has " + std::to_string(fill_value.size()) +
                            " channels, image has " + std::to_string(image.channels()));
  }
  if ((fill_value.array() < 0.0).any() || (fill_value.array() > 1.0).any()) {
    throw PreconditionError("erasing: fill value outside [0, 1]");
  }
}

void fill_pixel(Image& image, int r, int c, FillPolicy fill, const Eigen::VectorXd& fill_value,
                RandomSource& rng) {
  for (int ch = 0; ch < image.channels(); ++ch) {
    switch (fill) {
      case FillPolicy::zero: image.at(r, c, ch) = 0.0; break;
      case FillPolicy::mean: image.at(r, c, ch) = fill_value[ch]; break;
      case FillPolicy::random_uniform: image.at(r, c, ch) = uniform_f64(rng, 0.0, 1.0); break;
    }
  }
}

}  // namespace

FillPolicy parse_fill_policy(const std::string& name) {
  if (name == "zero") return FillPolicy::zero;
  if (name == "mean") return FillPolicy::mean;
  if (name == "random_uniform") return FillPolicy::random_uniform;
  throw ConfigError("fill: unknown policy '" + name + "' (zero|mean|random_uniform)");
}

std::string to_string(FillPolicy policy) {
  switch (policy) {
    case FillPolicy::zero: return "zero";
    case FillPolicy::mean: return "mean";
    case FillPolicy::random_uniform: return "random_uniform";
  }
  return "?";
}

void ReConfig::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("re.probability: must lie in [0, 1]");
  if (!(s_l > 0.0 && s_l <= s_h && s_h < 1.0)) throw ConfigError("re.s_l/re.s_h: need 0 < s_l <= s_h < 1");
  if (!(r_1 > 0.0 && r_1 <= r_2 && std::isfinite(r_2))) throw ConfigError("re.r_1/re.r_2: need 0 < r_1 <= r_2");
  if (max_attempts < 1) throw ConfigError("re.max_attempts: must be >= 1");
}

void BceConfig::validate() const {
  if (!(s_min >= 2 && s_min <= s_max)) throw ConfigError("bce.s_min/bce.s_max: need 2 <= s_min <= s_max");
}

std::optional<EraseRegion> sample_re_region(RandomSource& rng, const ReConfig& cfg, int img_h, int img_w) {
  cfg.validate();
  if (img_h < 1 || img_w < 1) throw PreconditionError("sample_re_region: empty image");
  const double area = static_cast<double>(img_h) * img_w;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double ratio = draw_between(rng, cfg.s_l, cfg.s_h);
    const double aspect = draw_between(rng, cfg.r_1, cfg.r_2);
    const double target = ratio * area;
    const int h = std::max(1, round_half_up(std::sqrt(target * aspect)));
    const int w = std::max(1, round_half_up(std::sqrt(target / aspect)));
    if (h > img_h || w > img_w) continue;
    EraseRegion region;
    region.height = h;
    region.width = w;
    region.area_ratio = ratio;
    region.aspect = aspect;
    region.top = static_cast<int>(uniform_int(rng, 0, img_h - h));
    region.left = static_cast<int>(uniform_int(rng, 0, img_w - w));
    return region;
  }
  return std::nullopt;
}

void erase_region(Image& image, const EraseRegion& region, FillPolicy fill,
                  const Eigen::VectorXd& fill_value, RandomSource& rng) {
  check_fill(image, fill, fill_value);
  if (region.top < 0 || region.left < 0 || region.height < 0 || region.width < 0 ||
      region.top + region.height > image.height() || region.left + region.width > image.width()) {
    throw PreconditionError("erase_region: region outside image");
  }
  for (int r = region.top; r < region.top + region.height; ++r) {
    for (int c = region.left; c < region.left + region.width; ++c) fill_pixel(image, r, c, fill, fill_value, rng);
  }
}

void erase_rows(Image& image, RowBand band, FillPolicy fill, const Eigen::VectorXd& fill_value,
                RandomSource& rng) {
  erase_region(image, EraseRegion{band.begin, 0, band.rows(), image.width()}, fill, fill_value, rng);
}

std::pair<Image, std::optional<EraseRegion>> apply_re(const Image& image, RandomSource& rng,
                                                      const ReConfig& cfg,
                                                      const Eigen::VectorXd& fill_value) {
  cfg.validate();
  check_fill(image, cfg.fill, fill_value);
  Image out = image;
  if (!bernoulli(rng, cfg.probability)) return {std::move(out), std::nullopt};
  auto region = sample_re_region(rng, cfg, image.height(), image.width());
  if (region) erase_region(out, *region, cfg.fill, fill_value, rng);
  return {std::move(out), region};
}

BceResult apply_bce_subbatch(std::span<const Image> images, RandomSource& rng, const BceConfig& cfg,
                             const Eigen::VectorXd& fill_value) {
  cfg.validate();
  if (images.empty()) throw PreconditionError("apply_bce_subbatch: empty sub-batch");
  for (const Image& img : images) {
    if (!img.same_shape(images.front())) throw PreconditionError("apply_bce_subbatch: mismatched image shapes");
  }
  const int height = images.front().height();
  if (cfg.s_max > height) throw PreconditionError("apply_bce_subbatch: s_max exceeds image height");

  BceResult result;
  result.s = static_cast<int>(uniform_int(rng, cfg.s_min, cfg.s_max));
  result.stripe_index = static_cast<int>(uniform_int(rng, 0, result.s - 1));
  result.band = stripe_band(height, result.s, result.stripe_index);
  result.images.assign(images.begin(), images.end());
  for (Image& img : result.images) erase_rows(img, result.band, cfg.fill, fill_value, rng);
  return result;
}

}  // namespace umfl
