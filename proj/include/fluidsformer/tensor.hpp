#ifndef FLUIDSFORMER_TENSOR_HPP_
#define FLUIDSFORMER_TENSOR_HPP_

#include "fluidsformer/errors.hpp"

#include <Eigen/Core>

#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace fluidsformer {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape &shape);

/// Dense row-major n-dimensional array. Scalar is float for training and
/// double for gradient checks.
template <typename Scalar> class Tensor {
public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}
  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor constant(Shape shape, Scalar value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }
  static Tensor scalar(Scalar value) { return constant({}, value); }

  const Shape &shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_[axis]; }
  Index size() const { return data_.size(); }
  bool empty() const { return shape_.empty() && data_.size() == 0; }

  Vector &data() { return data_; }
  const Vector &data() const { return data_; }
  Scalar *ptr() { return data_.data(); }
  const Scalar *ptr() const { return data_.data(); }

  Scalar &operator[](Index k) { return data_[k]; }
  Scalar operator[](Index k) const { return data_[k]; }
  Scalar item() const { return data_[0]; }

  /// Rank-2 view; rank-1 tensors view as a single row.
  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(data_.data(), rows(), cols());
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                       shape_string(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename Other> Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.allFinite(); }

private:
  Index rows() const {
    return rank() >= 2 ? size() / shape_.back() : Index{1};
  }
  Index cols() const { return rank() >= 1 ? shape_.back() : Index{1}; }

  Shape shape_;
  Vector data_;
};

} // namespace fluidsformer

#endif // FLUIDSFORMER_TENSOR_HPP_
