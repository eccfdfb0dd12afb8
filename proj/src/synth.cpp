#include "umfl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "umfl/errors.hpp"
#include "umfl/ppm.hpp"

namespace umfl {
namespace {

constexpr std::array<std::array<double, 3>, kMaxPaletteSize> kPalette{{
    {0.90, 0.10, 0.10}, {0.10, 0.70, 0.15}, {0.15, 0.25, 0.90}, {0.95, 0.85, 0.10},
    {0.05, 0.05, 0.05}, {0.95, 0.95, 0.95}, {0.60, 0.20, 0.75}, {0.10, 0.80, 0.85},
    {0.95, 0.50, 0.05}, {0.45, 0.30, 0.15}, {0.50, 0.50, 0.50}, {0.95, 0.55, 0.70},
    {0.30, 0.45, 0.10}, {0.05, 0.20, 0.40}, {0.70, 0.70, 0.30}, {0.55, 0.05, 0.25},
}};

std::string key_error(const char* key, const std::string& why) {
  return std::string("synth.") + key + ": " + why;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_identities < 1) throw ConfigError(key_error("num_identities", "must be >= 1"));
  if (samples_per_identity < 1) throw ConfigError(key_error("samples_per_identity", "must be >= 1"));
  if (height < 1 || width < 1) throw ConfigError(key_error("height", "image must be at least 1x1"));
  if (channels != 1 && channels != 3) throw ConfigError(key_error("channels", "must be 1 or 3"));
  if (num_parts < 2) throw ConfigError(key_error("num_parts", "must be >= 2"));
  if (num_parts > height) throw ConfigError(key_error("num_parts", "exceeds image height"));
  if (!(confusable_fraction >= 0.0 && confusable_fraction <= 1.0)) {
    throw ConfigError(key_error("confusable_fraction", "must lie in [0, 1]"));
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ConfigError(key_error("noise_sigma", "must be finite and >= 0"));
  }
  if (max_shift < 0 || max_shift >= width) throw ConfigError(key_error("max_shift", "must lie in [0, width)"));
  if (palette_size < 2 || palette_size > kMaxPaletteSize) {
    throw ConfigError(key_error("palette_size", "must lie in [2, " + std::to_string(kMaxPaletteSize) + "]"));
  }
  if (!(brightness_jitter >= 0.0 && brightness_jitter < 1.0)) {
    throw ConfigError(key_error("brightness_jitter", "must lie in [0, 1)"));
  }
}

Eigen::Vector3d palette_color(int index) {
  const auto& c = kPalette.at(static_cast<std::size_t>(index));
  return {c[0], c[1], c[2]};
}

std::vector<IdentityParts> draw_identity_parts(const SynthConfig& cfg, RandomSource& rng) {
  cfg.validate();
  const int slots = cfg.num_identities / 2;
  const int pairs = static_cast<int>(std::floor(cfg.confusable_fraction * cfg.num_identities / 2.0));
  std::vector<IdentityParts> parts(static_cast<std::size_t>(cfg.num_identities));

  auto draw_colors = [&](IdentityParts& p) {
    p.colors.resize(static_cast<std::size_t>(cfg.num_parts));
    for (int& c : p.colors) c = static_cast<int>(uniform_int(rng, 0, cfg.palette_size - 1));
  };

  for (int slot = 0; slot < slots; ++slot) {
    IdentityParts& first = parts[static_cast<std::size_t>(2 * slot)];
    IdentityParts& second = parts[static_cast<std::size_t>(2 * slot + 1)];
    draw_colors(first);
    // Bresenham spread: slot is paired when floor((slot+1)*pairs/slots) steps up.
    const bool paired = slots > 0 && ((slot + 1) * pairs) / slots > (slot * pairs) / slots;
    if (!paired) {
      draw_colors(second);
      continue;
    }
    second.colors = first.colors;
    const int part = static_cast<int>(uniform_int(rng, 0, cfg.num_parts - 1));
    auto& color = second.colors[static_cast<std::size_t>(part)];
    const int other = static_cast<int>(uniform_int(rng, 0, cfg.palette_size - 2));
    color = other >= color ? other + 1 : other;
    first.partner = 2 * slot + 1;
    second.partner = 2 * slot;
    first.differing_part = second.differing_part = part;
  }
  if (cfg.num_identities % 2 == 1) draw_colors(parts.back());
  return parts;
}

Image render_identity(const SynthConfig& cfg, const IdentityParts& parts) {
  Image img(cfg.height, cfg.width, cfg.channels);
  for (int part = 0; part < cfg.num_parts; ++part) {
    const RowBand band = stripe_band(cfg.height, cfg.num_parts, part);
    const Eigen::Vector3d rgb = palette_color(parts.colors[static_cast<std::size_t>(part)]);
    for (int r = band.begin; r < band.end; ++r) {
      for (int c = 0; c < cfg.width; ++c) {
        if (cfg.channels == 3) {
          for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = rgb[ch];
        } else {
          img.at(r, c, 0) = rgb.mean();
        }
      }
    }
  }
  return img;
}

Dataset gen_synthetic_dataset(const SynthConfig& cfg, RandomSource& rng) {
  const std::vector<IdentityParts> identities = draw_identity_parts(cfg, rng);
  Dataset ds;
  ds.num_identities = cfg.num_identities;
  ds.samples.reserve(static_cast<std::size_t>(cfg.num_identities) * cfg.samples_per_identity);

  for (int id = 0; id < cfg.num_identities; ++id) {
    const Image base = render_identity(cfg, identities[static_cast<std::size_t>(id)]);
    for (int k = 0; k < cfg.samples_per_identity; ++k) {
      const int shift = static_cast<int>(uniform_int(rng, -cfg.max_shift, cfg.max_shift));
      const double brightness =
          cfg.brightness_jitter > 0.0 ? uniform_f64(rng, -cfg.brightness_jitter, cfg.brightness_jitter) : 0.0;
      Image img(cfg.height, cfg.width, cfg.channels, 0.5);
      for (int r = 0; r < cfg.height; ++r) {
        for (int c = 0; c < cfg.width; ++c) {
          const int src = c - shift;
          for (int ch = 0; ch < cfg.channels; ++ch) {
            double v = (src >= 0 && src < cfg.width) ? base.at(r, src, ch) : 0.5;
            if (cfg.noise_sigma > 0.0) v = std::clamp(v + cfg.noise_sigma * standard_normal(rng), 0.0, 1.0);
            img.at(r, c, ch) = std::clamp(v + brightness, 0.0, 1.0);
          }
        }
      }
      ds.samples.push_back({std::move(img), id,
                            static_cast<std::int64_t>(id) * cfg.samples_per_identity + k});
    }
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw FormatError("cannot write " + (dir / "manifest.csv").string());
  manifest << "sample_id,identity,relative_path\n";
  for (const auto& s : dataset.samples) {
    const std::string name = "img_" + std::to_string(s.sample_id) + ".ppm";
    save_ppm(s.image, dir / name);
    manifest << s.sample_id << ',' << s.identity << ',' << name << '\n';
  }
  if (!manifest) throw FormatError("write failed for " + (dir / "manifest.csv").string());
}

Dataset read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw FormatError("manifest: cannot open " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || line != "sample_id,identity,relative_path") {
    throw FormatError("manifest: bad header in " + manifest.string());
  }
  Dataset ds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id_text, label_text, rel;
    if (!std::getline(row, id_text, ',') || !std::getline(row, label_text, ',') ||
        !std::getline(row, rel)) {
      throw FormatError("manifest: line " + std::to_string(line_no) + " needs 3 columns");
    }
    ImageSample s;
    try {
      s.sample_id = std::stoll(id_text);
      s.identity = std::stoi(label_text);
    } catch (const std::exception&) {
      throw FormatError("manifest: line " + std::to_string(line_no) + " has a non-integer field");
    }
    s.image = load_ppm(manifest.parent_path() / rel);
    ds.num_identities = std::max(ds.num_identities, s.identity + 1);
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace umfl
