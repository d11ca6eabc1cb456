#include "vsl/layers.hpp"

#include <cmath>
#include <string>

namespace vsl {

namespace testhook {
std::string corrupt_backward_layer;
}  // namespace testhook

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  require_same_shape(x, dy, "relu_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

namespace {

struct ConvDims {
  std::size_t channels, height, width;    // input
  std::size_t kernels, radius, window;    // kernel window; radius = (R-1)/2
  std::size_t out_h, out_w;
  std::size_t pad;                        // spatial offset applied to input coords
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernels, Padding padding) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be CxHxW");
  if (kernels.rank() != 4) throw ShapeError("conv2d: kernels must be KxCxRxR");
  ConvDims d{};
  d.channels = x.dim(0);
  d.height = x.dim(1);
  d.width = x.dim(2);
  d.kernels = kernels.dim(0);
  d.window = kernels.dim(2);
  if (kernels.dim(1) != d.channels) {
    throw ShapeError("conv2d: kernel channels " + std::to_string(kernels.dim(1)) +
                     " do not match input channels " + std::to_string(d.channels));
  }
  if (kernels.dim(3) != d.window) throw ShapeError("conv2d: kernel window must be square");
  if (d.window % 2 == 0) throw ShapeError("conv2d: kernel window must be odd");
  d.radius = (d.window - 1) / 2;
  if (padding == Padding::same) {
    d.pad = d.radius;
    d.out_h = d.height;
    d.out_w = d.width;
  } else {
    d.pad = 0;
    if (d.height < d.window || d.width < d.window) {
      throw ShapeError("conv2d: input smaller than kernel under valid padding");
    }
    d.out_h = d.height - d.window + 1;
    d.out_w = d.width - d.window + 1;
  }
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Padding padding) {
  const ConvDims d = conv_dims(x, kernels, padding);
  if (bias.rank() != 1 || bias.dim(0) != d.kernels) {
    throw ShapeError("conv2d: bias must have one value per kernel");
  }
  Tensor y({d.kernels, d.out_h, d.out_w});
  const double* xp = x.data();
  const double* kp = kernels.data();
  double* yp = y.data();
  for (std::size_t k = 0; k < d.kernels; ++k) {
    const double b = bias[k];
    for (std::size_t i = 0; i < d.out_h; ++i) {
      double* yrow = yp + (k * d.out_h + i) * d.out_w;
      for (std::size_t j = 0; j < d.out_w; ++j) yrow[j] = b;
    }
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t u = 0; u < d.window; ++u) {
        for (std::size_t v = 0; v < d.window; ++v) {
          const double w = kp[((k * d.channels + c) * d.window + u) * d.window + v];
          if (w == 0.0) continue;
          // input row = out row + u - pad, input col = out col + v - pad
          const std::ptrdiff_t row_off = static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(d.pad);
          const std::ptrdiff_t col_off = static_cast<std::ptrdiff_t>(v) - static_cast<std::ptrdiff_t>(d.pad);
          for (std::size_t i = 0; i < d.out_h; ++i) {
            const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i) + row_off;
            if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(d.height)) continue;
            const double* xrow = xp + (c * d.height + static_cast<std::size_t>(xi)) * d.width;
            double* yrow = yp + (k * d.out_h + i) * d.out_w;
            const std::size_t j_lo = col_off < 0 ? static_cast<std::size_t>(-col_off) : 0;
            const std::size_t j_hi =
                d.out_w - (col_off > 0 ? static_cast<std::size_t>(col_off) : 0);
            for (std::size_t j = j_lo; j < j_hi; ++j) {
              yrow[j] += w * xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) + col_off)];
            }
          }
        }
      }
    }
  }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dy,
                            Padding padding) {
  const ConvDims d = conv_dims(x, kernels, padding);
  if (dy.rank() != 3 || dy.dim(0) != d.kernels || dy.dim(1) != d.out_h || dy.dim(2) != d.out_w) {
    throw ShapeError("conv2d_backward: dy shape does not match the forward output");
  }
  Conv2dGrads g{Tensor(x.shape()), Tensor(kernels.shape()), Tensor({d.kernels})};
  const double* xp = x.data();
  const double* kp = kernels.data();
  const double* gp = dy.data();
  double* dxp = g.dx.data();
  double* dkp = g.dkernels.data();
  for (std::size_t k = 0; k < d.kernels; ++k) {
    double bias_sum = 0.0;
    for (std::size_t i = 0; i < d.out_h * d.out_w; ++i) bias_sum += gp[k * d.out_h * d.out_w + i];
    g.dbias[k] = bias_sum;
    for (std::size_t c = 0; c < d.channels; ++c) {
      for (std::size_t u = 0; u < d.window; ++u) {
        for (std::size_t v = 0; v < d.window; ++v) {
          const std::size_t kidx = ((k * d.channels + c) * d.window + u) * d.window + v;
          const double w = kp[kidx];
          const std::ptrdiff_t row_off = static_cast<std::ptrdiff_t>(u) - static_cast<std::ptrdiff_t>(d.pad);
          const std::ptrdiff_t col_off = static_cast<std::ptrdiff_t>(v) - static_cast<std::ptrdiff_t>(d.pad);
          double wgrad = 0.0;
          for (std::size_t i = 0; i < d.out_h; ++i) {
            const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(i) + row_off;
            if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(d.height)) continue;
            const std::size_t xrow_base = (c * d.height + static_cast<std::size_t>(xi)) * d.width;
            const std::size_t yrow_base = (k * d.out_h + i) * d.out_w;
            const std::size_t j_lo = col_off < 0 ? static_cast<std::size_t>(-col_off) : 0;
            const std::size_t j_hi =
                d.out_w - (col_off > 0 ? static_cast<std::size_t>(col_off) : 0);
            for (std::size_t j = j_lo; j < j_hi; ++j) {
              const std::size_t xj = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(j) + col_off);
              const double grad = gp[yrow_base + j];
              wgrad += grad * xp[xrow_base + xj];
              dxp[xrow_base + xj] += w * grad;
            }
          }
          dkp[kidx] = wgrad;
        }
      }
    }
  }
  return g;
}

MaxPoolResult maxpool2d(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("maxpool2d: input must be CxHxW");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (height % 2 != 0 || width % 2 != 0) {
    throw ShapeError("maxpool2d: spatial dims must be divisible by 2, got " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  MaxPoolResult r{Tensor({channels, height / 2, width / 2}), {}};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i + 1 < height; i += 2) {
      for (std::size_t j = 0; j + 1 < width; j += 2) {
        std::size_t best = (c * height + i) * width + j;
        double best_v = x[best];
        const std::size_t candidates[3] = {(c * height + i) * width + j + 1,
                                           (c * height + i + 1) * width + j,
                                           (c * height + i + 1) * width + j + 1};
        for (std::size_t idx : candidates) {
          if (x[idx] > best_v) {  // strict: ties keep the earliest index
            best_v = x[idx];
            best = idx;
          }
        }
        r.out[o] = best_v;
        r.argmax[o] = best;
        ++o;
      }
    }
  }
  return r;
}

Tensor maxpool2d_backward(const std::vector<std::size_t>& input_shape,
                          const std::vector<std::size_t>& argmax, const Tensor& dy) {
  if (dy.size() != argmax.size()) {
    throw ShapeError("maxpool2d_backward: dy size does not match pooled output");
  }
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  if (weights.rank() != 2) throw ShapeError("dense: weights must be (m, n)");
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (x.size() != n) {
    throw ShapeError("dense: input size " + std::to_string(x.size()) +
                     " does not match weight columns " + std::to_string(n));
  }
  if (bias.rank() != 1 || bias.dim(0) != m) throw ShapeError("dense: bias must be (m)");
  Tensor y({m});
  const double* wp = weights.data();
  const double* xp = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double sum = bias[i];
    const double* row = wp + i * n;
    for (std::size_t j = 0; j < n; ++j) sum += row[j] * xp[j];
    y[i] = sum;
  }
  return y;
}

DenseGrads dense_backward(const Tensor& x, const Tensor& weights, const Tensor& dy) {
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  if (x.size() != n || dy.size() != m) {
    throw ShapeError("dense_backward: gradient or input shape mismatch");
  }
  DenseGrads g{Tensor({n}), Tensor(weights.shape()), dy};
  const double* wp = weights.data();
  const double* xp = x.data();
  double* dxp = g.dx.data();
  double* dwp = g.dweights.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double gi = dy[i];
    const double* row = wp + i * n;
    double* drow = dwp + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      dxp[j] += row[j] * gi;
      drow[j] = gi * xp[j];
    }
  }
  return g;
}

Tensor l2_normalize(const Tensor& v, NormMode mode, double eps) {
  const double norm = v.l2_norm();
  if (norm < eps) {
    if (mode == NormMode::strict) {
      throw DegeneratePair("l2_normalize: vector norm " + std::to_string(norm) +
                           " below " + std::to_string(eps));
    }
    Tensor y = v;
    y *= 1.0 / eps;
    return y;
  }
  Tensor y = v;
  y *= 1.0 / norm;
  return y;
}

Tensor l2_normalize_backward(const Tensor& v, const Tensor& dy, NormMode mode, double eps) {
  require_same_shape(v, dy, "l2_normalize_backward");
  const double norm = v.l2_norm();
  if (norm < eps) {
    if (mode == NormMode::strict) {
      throw DegeneratePair("l2_normalize_backward: vector norm below eps");
    }
    Tensor dx = dy;
    dx *= 1.0 / eps;
    return dx;
  }
  Tensor unit = v;
  unit *= 1.0 / norm;
  const double proj = unit.dot(dy);
  Tensor dx(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) dx[i] = (dy[i] - unit[i] * proj) / norm;
  return dx;
}

}  // namespace vsl
