#include "umfl/image.hpp"

#include <cmath>
#include <set>
#include <string>

#include "umfl/errors.hpp"

namespace umfl {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw PreconditionError("Image: invalid shape " + std::to_string(height) + "x" +
                            std::to_string(width) + "x" + std::to_string(channels));
  }
  data_ = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(height) * width * channels, fill);
}

void Image::validate() const {
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw PreconditionError("Image: value " + std::to_string(v) + " at index " +
                              std::to_string(i) + " outside [0, 1]");
    }
  }
}

void Dataset::validate() const {
  std::vector<int> counts(static_cast<std::size_t>(std::max(num_identities, 0)), 0);
  std::set<std::int64_t> ids;
  for (const auto& s : samples) {
    if (s.identity < 0 || s.identity >= num_identities) {
      throw PreconditionError("Dataset: identity " + std::to_string(s.identity) +
                              " outside [0, " + std::to_string(num_identities) + ")");
    }
    ++counts[static_cast<std::size_t>(s.identity)];
    if (!ids.insert(s.sample_id).second) {
      throw PreconditionError("Dataset: duplicate sample_id " + std::to_string(s.sample_id));
    }
  }
  for (std::size_t id = 0; id < counts.size(); ++id) {
    if (counts[id] == 0) {
      throw PreconditionError("Dataset: identity " + std::to_string(id) + " has no samples");
    }
  }
}

RowBand stripe_band(int height, int count, int index) {
  if (count < 1 || count > height || index < 0 || index >= count) {
    throw PreconditionError("stripe_band: band " + std::to_string(index) + " of " +
                            std::to_string(count) + " invalid for height " + std::to_string(height));
  }
  const int band = height / count;
  const int begin = index * band;
  return {begin, index == count - 1 ? height : begin + band};
}

Eigen::VectorXd mean_pixel(const Dataset& dataset) {
  if (dataset.samples.empty()) throw PreconditionError("mean_pixel: empty dataset");
  const int channels = dataset.samples.front().image.channels();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(channels);
  double pixels = 0.0;
  for (const auto& s : dataset.samples) {
    const Image& img = s.image;
    if (img.channels() != channels) {
      throw PreconditionError("mean_pixel: mixed channel counts in dataset");
    }
    const Eigen::Index n = img.size() / channels;
    Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> px(
        img.data().data(), n, channels);
    sum += px.colwise().sum().matrix().transpose();
    pixels += static_cast<double>(n);
  }
  return sum / pixels;
}

}  // namespace umfl
