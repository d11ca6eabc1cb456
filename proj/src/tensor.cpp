#include "vsl/tensor.hpp"

#include <cmath>
#include <string>

namespace vsl {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ValidationError("tensor shape has a zero dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_volume(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_volume(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape volume " + std::to_string(shape_volume(shape_)));
  }
}

Tensor Tensor::of(std::initializer_list<double> values) {
  if (values.size() == 0) throw ValidationError("tensor shape has a zero dimension");
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scalar) {
  for (double& v : data_) v *= scalar;
  return *this;
}

double Tensor::l2_norm() const {
  double sum = 0.0;
  for (double v : data_) sum += v * v;
  return std::sqrt(sum);
}

double Tensor::dot(const Tensor& other) const {
  require_same_shape(*this, other, "tensor dot");
  double sum = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) sum += data_[i] * other.data_[i];
  return sum;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* context) {
  if (!a.same_shape(b)) {
    auto fmt = [](const std::vector<std::size_t>& s) {
      std::string out = "[";
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
      }
      return out + "]";
    };
    throw ShapeError(std::string(context) + ": shape mismatch " + fmt(a.shape()) +
                     " vs " + fmt(b.shape()));
  }
}

}  // namespace vsl
