#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace umfl {

/// Row-major H x W x C pixel grid with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  Eigen::Index size() const noexcept { return data_.size(); }

  double& at(int row, int col, int channel) { return data_[offset(row, col, channel)]; }
  double at(int row, int col, int channel) const { return data_[offset(row, col, channel)]; }

  Eigen::ArrayXd& data() noexcept { return data_; }
  const Eigen::ArrayXd& data() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  /// Throws PreconditionError unless every value is finite and inside [0, 1].
  void validate() const;

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && (a.data_ == b.data_).all();
  }

 private:
  Eigen::Index offset(int row, int col, int channel) const noexcept {
    return (static_cast<Eigen::Index>(row) * width_ + col) * channels_ + channel;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Eigen::ArrayXd data_;
};

struct ImageSample {
  Image image;
  int identity = 0;
  std::int64_t sample_id = 0;
};

struct Dataset {
  std::vector<ImageSample> samples;
  int num_identities = 0;

  /// Checks label range, per-identity coverage and sample_id uniqueness.
  void validate() const;
};

/// Half-open row interval [begin, end).
struct RowBand {
  int begin = 0;
  int end = 0;
  int rows() const noexcept { return end - begin; }
  friend bool operator==(const RowBand&, const RowBand&) = default;
};

/// Band `index` of `count` contiguous horizontal bands of height floor(height / count);
/// the last band absorbs the remainder rows.
RowBand stripe_band(int height, int count, int index);

/// Per-channel mean over every pixel of every sample.
Eigen::VectorXd mean_pixel(const Dataset& dataset);

}  // namespace umfl
