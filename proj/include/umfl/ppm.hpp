#pragma once

#include <filesystem>
#include <string>

#include "umfl/image.hpp"

namespace umfl {

/// Binary PPM (P6, 3 channels) or PGM (P5, 1 channel) with maxval 255.
/// Bytes map to b / 255.
Image load_ppm(const std::filesystem::path& path);
Image decode_ppm(const std::string& bytes);

/// Values map to round(v * 255).
void save_ppm(const Image& image, const std::filesystem::path& path);
std::string encode_ppm(const Image& image);

}  // namespace umfl
