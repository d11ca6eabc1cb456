#pragma once

#include <string>
#include <vector>

#include "vsl/tensor.hpp"

namespace vsl {

// Denominator floor for L2 normalization. Training clamps to this value;
// strict mode treats anything below it as a degenerate pair.
inline constexpr double kEpsNorm = 1e-8;

enum class Padding { same, valid };

enum class NormMode { clamp, strict };

// Elementwise max(x, 0). The subgradient at exactly 0 is taken as 0.
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// 2-D cross-correlation, stride 1. x is CxHxW, kernels KxCxRxR (R odd),
// bias K. Same padding keeps HxW; valid padding yields (H-R+1)x(W-R+1).
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias,
              Padding padding = Padding::same);

struct Conv2dGrads {
  Tensor dx;
  Tensor dkernels;
  Tensor dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy,
                            Padding padding = Padding::same);

// Non-overlapping 2x2 max pooling. H and W must be even. argmax holds, for
// each output element, the flat input index the maximum came from; ties go
// to the first element of the window in row-major order.
struct MaxPoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;
};
MaxPoolResult maxpool2d(const Tensor& x);
Tensor maxpool2d_backward(const std::vector<std::size_t>& input_shape,
                          const std::vector<std::size_t>& argmax, const Tensor& dy);

// Fully connected layer: y = Wx + b with W of shape (m, n), x of shape (n).
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);

struct DenseGrads {
  Tensor dx;
  Tensor dweights;
  Tensor dbias;
};
DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dy);

// v / ||v||. In clamp mode the denominator is floored at eps; in strict mode
// ||v|| < eps throws DegeneratePair. The backward pass applies the exact
// Jacobian (I - uu^T)/||v|| with u = v/||v||, or I/eps in the clamped regime.
Tensor l2_normalize(const Tensor& v, NormMode mode = NormMode::clamp, double eps = kEpsNorm);
Tensor l2_normalize_backward(const Tensor& v, const Tensor& dy,
                             NormMode mode = NormMode::clamp, double eps = kEpsNorm);

namespace testhook {
// When set to a layer name ("conv1", "conv2", "dense1", "dense2"), the
// trainer perturbs that layer's weight gradient so the self-check can prove
// it detects a broken backward pass. Empty in normal operation.
extern std::string corrupt_backward_layer;
}  // namespace testhook

}  // namespace vsl
