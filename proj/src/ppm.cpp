#include "umfl/ppm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "umfl/errors.hpp"

namespace umfl {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

  std::string token(const char* field) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) throw FormatError(std::string("ppm: missing ") + field);
    return bytes_.substr(start, pos_ - start);
  }

  int number(const char* field) {
    const std::string t = token(field);
    int value = 0;
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c)) || value > 100000000) {
        throw FormatError(std::string("ppm: bad ") + field + " '" + t + "'");
      }
      value = value * 10 + (c - '0');
    }
    return value;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("ppm: missing whitespace after maxval");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(const std::string& bytes) {
  HeaderReader reader(bytes);
  const std::string magic = reader.token("magic");
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw FormatError("ppm: unsupported magic '" + magic + "' (expected P5 or P6)");
  }
  const int width = reader.number("width");
  const int height = reader.number("height");
  const int maxval = reader.number("maxval");
  if (width < 1) throw FormatError("ppm: width must be positive");
  if (height < 1) throw FormatError("ppm: height must be positive");
  if (maxval != 255) throw FormatError("ppm: maxval " + std::to_string(maxval) + " != 255");
  const std::size_t start = reader.raster_start();

  Image image(height, width, channels);
  const auto expected = static_cast<std::size_t>(image.size());
  if (bytes.size() - std::min(start, bytes.size()) < expected) {
    throw FormatError("ppm: truncated payload, expected " + std::to_string(expected) + " bytes");
  }
  for (std::size_t i = 0; i < expected; ++i) {
    image.data()[static_cast<Eigen::Index>(i)] =
        static_cast<double>(static_cast<unsigned char>(bytes[start + i])) / 255.0;
  }
  return image;
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("ppm: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

std::string encode_ppm(const Image& image) {
  image.validate();
  std::ostringstream out;
  out << (image.channels() == 3 ? "P6" : "P5") << '\n'
      << image.width() << ' ' << image.height() << "\n255\n";
  std::string bytes = out.str();
  bytes.reserve(bytes.size() + static_cast<std::size_t>(image.size()));
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    // round-half-up on non-negative input
    bytes.push_back(static_cast<char>(static_cast<unsigned char>(std::floor(image.data()[i] * 255.0 + 0.5))));
  }
  return bytes;
}

void save_ppm(const Image& image, const std::filesystem::path& path) {
  const std::string bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("ppm: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("ppm: write failed for " + path.string());
}

}  // namespace umfl
