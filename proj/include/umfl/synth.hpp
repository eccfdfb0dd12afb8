#pragma once

#include <filesystem>
#include <vector>

#include "umfl/image.hpp"
#include "umfl/rng.hpp"

namespace umfl {

/// Synthetic "part-person" identities: horizontal color stripes, one color per part.
struct SynthConfig {
  int num_identities = 60;
  int samples_per_identity = 8;
  int height = 48;
  int width = 24;
  int channels = 3;
  int num_parts = 6;
  double confusable_fraction = 0.5;
  double noise_sigma = 0.03;
  int max_shift = 2;
  int palette_size = 8;
  /// Half-width of the uniform global brightness offset.
  double brightness_jitter = 0.05;

  void validate() const;
};

inline constexpr int kMaxPaletteSize = 16;

/// Fixed RGB palette shared by every generated dataset.
Eigen::Vector3d palette_color(int index);

/// Per-identity part colors (palette indices), plus the confusable-pair structure.
struct IdentityParts {
  std::vector<int> colors;
  /// Partner identity sharing all but one part, or -1.
  int partner = -1;
  /// Index of the part that differs from the partner, or -1.
  int differing_part = -1;
};

/// Draws the part colors for every identity. Consecutive identity slots
/// (2k, 2k+1) form a confusable pair when slot k is selected; selected slots
/// are spread evenly so that floor(fraction * N / 2) pairs exist.
std::vector<IdentityParts> draw_identity_parts(const SynthConfig& cfg, RandomSource& rng);

/// Noiseless, unshifted stripe render of one identity.
Image render_identity(const SynthConfig& cfg, const IdentityParts& parts);

/// Renders samples_per_identity jittered samples per identity. sample_id is the
/// running index identity * samples_per_identity + k.
Dataset gen_synthetic_dataset(const SynthConfig& cfg, RandomSource& rng);

/// Writes manifest.csv (sample_id,identity,relative_path) and one PPM per sample.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Loads a dataset written by write_dataset.
Dataset read_dataset(const std::filesystem::path& manifest);

}  // namespace umfl
