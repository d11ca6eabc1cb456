#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "vsl/errors.hpp"

namespace vsl {

// Dense row-major tensor of 64-bit floats. The shape is immutable after
// construction; data length always equals the product of the dimensions.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled tensor of the given shape. Braced lists always mean shapes;
  // rank-1 value vectors come from Tensor::of.
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor of(std::initializer_list<double> values);  // rank-1
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Indexed access for the common ranks used by the layer kernels.
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(double value);

  // Elementwise in-place helpers used by the update rules.
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double scalar);

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

  double l2_norm() const;
  double dot(const Tensor& other) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Throws ShapeError with the given context when the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* context);

// Product of dimensions; throws ValidationError on a zero dimension.
std::size_t shape_volume(const std::vector<std::size_t>& shape);

}  // namespace vsl
