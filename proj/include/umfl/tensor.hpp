#pragma once

#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "umfl/errors.hpp"

namespace umfl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major n-d array. Rank 0 is a scalar.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() : values_(Array::Zero(1)) {}
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), values_(Array::Constant(shape_size(shape_), fill)) {}
  Tensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
      throw PreconditionError("Tensor: " + std::to_string(values_.size()) + " values for shape " +
                              shape_string(shape_));
    }
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{}, Array::Constant(1, v)); }

  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    Tensor t(Shape{m.rows(), m.cols()});
    t.matrix() = m.template cast<Scalar>();
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return values_.size(); }

  Array& values() noexcept { return values_; }
  const Array& values() const noexcept { return values_; }
  Scalar item() const { return values_[0]; }

  /// Rows = leading dimension, columns = product of the rest.
  MatrixMap matrix() { return MatrixMap(values_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(values_.data(), rows(), cols()); }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Index rows() const { return shape_.empty() ? 1 : shape_[0]; }
  Index cols() const { return shape_.empty() ? 1 : values_.size() / std::max<Index>(shape_[0], 1); }

  Shape shape_;
  Array values_;
};

}  // namespace umfl
