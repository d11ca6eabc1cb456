#include <doctest.h>

#include <cmath>
#include <functional>

#include "vsl/grad_check.hpp"
#include "vsl/layers.hpp"
#include "vsl/rng.hpp"
#include "vsl/tensor.hpp"

using namespace vsl;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces a tensor to a scalar with fixed random weights; its gradient w.r.t.
// the tensor is exactly those weights.
struct Probe {
  Tensor weights;
  explicit Probe(const Tensor& like, Rng& rng) : weights(like.shape()) {
    for (double& v : weights.values()) v = rng.uniform(-1.0, 1.0);
  }
  double operator()(const Tensor& t) const { return weights.dot(t); }
};

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("grad_check agrees with a polynomial derivative") {
  const auto f = [](const std::vector<double>& x) { return x[0] * x[0]; };
  const GradCheckReport report = grad_check(f, {3.0}, {6.0});
  CHECK(report.max_rel_error < 1e-9);
  CHECK(report.coordinates_checked == 1);
}

TEST_CASE("grad_check rejects a non-finite objective") {
  const auto f = [](const std::vector<double>& x) { return std::sqrt(x[0]); };
  CHECK_THROWS_AS(grad_check(f, {0.0}, {1.0}), NumericalError);
}

TEST_CASE("grad_check honors the skip predicate") {
  const auto f = [](const std::vector<double>& x) { return x[0] + x[1]; };
  const auto skip = [](std::size_t i) { return i == 0; };
  const GradCheckReport report = grad_check(f, {1.0, 1.0}, {999.0, 1.0}, 1e-5, skip);
  CHECK(report.coordinates_checked == 1);
  CHECK(report.max_rel_error < 1e-9);
}

TEST_CASE("relu forward matches the definition") {
  CHECK(relu(Tensor::of({-1, 0, 2})) == Tensor::of({0, 0, 2}));
  const Tensor dx = relu_backward(Tensor::of({-1, 2}), Tensor::of({5, 5}));
  CHECK(dx == Tensor::of({0, 5}));
  // all-negative input: output and backward both zero
  CHECK(relu(Tensor::of({-3, -1})) == Tensor::of({0, 0}));
  CHECK(relu_backward(Tensor::of({-3, -1}), Tensor::of({7, 7})) == Tensor::of({0, 0}));
}

TEST_CASE("relu backward matches finite differences away from the kink") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Tensor x = random_tensor({40}, rng);
    const Probe probe(relu(x), rng);
    const Tensor analytic = relu_backward(x, probe.weights);
    const auto f = [&](const std::vector<double>& v) {
      return probe(relu(Tensor(x.shape(), v)));
    };
    const auto skip = [&](std::size_t i) { return std::abs(x[i]) < 1e-6; };
    const GradCheckReport report = grad_check(f, x.values(), analytic.values(), 1e-5, skip);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("conv2d identity kernel reproduces the input") {
  Rng rng(3);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  const Tensor kernel({1, 1, 1, 1}, {1.0});
  const Tensor out = conv2d(x, kernel, Tensor({1}));
  CHECK(out == x);
}

TEST_CASE("conv2d all-ones kernel on a one-hot input paints the 3x3 block") {
  Tensor x({1, 5, 5});
  x.at(0, 2, 2) = 1.0;
  const Tensor kernels = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor out = conv2d(x, kernels, Tensor({1}), Padding::same);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double expected = (i >= 1 && i <= 3 && j >= 1 && j <= 3) ? 1.0 : 0.0;
      CHECK(out.at(0, i, j) == expected);
    }
  }
  // corner hot pixel: the block clips at the border under same padding
  Tensor corner({1, 5, 5});
  corner.at(0, 0, 0) = 1.0;
  const Tensor out2 = conv2d(corner, kernels, Tensor({1}), Padding::same);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      const double expected = (i <= 1 && j <= 1) ? 1.0 : 0.0;
      CHECK(out2.at(0, i, j) == expected);
    }
  }
}

TEST_CASE("conv2d valid padding shrinks the output") {
  Rng rng(4);
  const Tensor x = random_tensor({2, 6, 5}, rng);
  const Tensor k = random_tensor({3, 2, 3, 3}, rng);
  const Tensor out = conv2d(x, k, Tensor({3}), Padding::valid);
  CHECK(out.shape() == std::vector<std::size_t>{3, 4, 3});
}

TEST_CASE("conv2d rejects channel mismatches") {
  Rng rng(5);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const Tensor k = random_tensor({3, 5, 3, 3}, rng);
  CHECK_THROWS_AS(conv2d(x, k, Tensor({3})), ShapeError);
  const Tensor even = random_tensor({3, 2, 2, 2}, rng);
  CHECK_THROWS_AS(conv2d(x, even, Tensor({3})), ShapeError);
}

TEST_CASE("conv2d backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (Padding pad : {Padding::same, Padding::valid}) {
      Rng rng(200 + seed);
      const Tensor x = random_tensor({2, 5, 5}, rng);
      const Tensor k = random_tensor({3, 2, 3, 3}, rng);
      const Tensor b = random_tensor({3}, rng);
      const Tensor out = conv2d(x, k, b, pad);
      const Probe probe(out, rng);
      const Conv2dGrads grads = conv2d_backward(x, k, probe.weights, pad);

      const auto fx = [&](const std::vector<double>& v) {
        return probe(conv2d(Tensor(x.shape(), v), k, b, pad));
      };
      CHECK(grad_check(fx, x.values(), grads.dx.values(), 1e-5).max_rel_error < 1e-4);

      const auto fk = [&](const std::vector<double>& v) {
        return probe(conv2d(x, Tensor(k.shape(), v), b, pad));
      };
      CHECK(grad_check(fk, k.values(), grads.dkernels.values(), 1e-5).max_rel_error < 1e-4);

      const auto fb = [&](const std::vector<double>& v) {
        return probe(conv2d(x, k, Tensor(b.shape(), v), pad));
      };
      CHECK(grad_check(fb, b.values(), grads.dbias.values(), 1e-5).max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("maxpool2d picks window maxima") {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const MaxPoolResult r = maxpool2d(x);
  CHECK(r.out.size() == 1);
  CHECK(r.out[0] == 4.0);
  CHECK(r.argmax[0] == 3);
  CHECK_THROWS_AS(maxpool2d(Tensor({1, 3, 4})), ShapeError);
}

TEST_CASE("maxpool2d ties route to the first element in row-major order") {
  const Tensor x = Tensor::full({1, 4, 4}, 2.5);
  const MaxPoolResult r = maxpool2d(x);
  const Tensor dx = maxpool2d_backward(x.shape(), r.argmax, Tensor::full(r.out.shape(), 1.0));
  // gradient lands on the top-left of each 2x2 window
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(dx.at(0, i, j) == ((i % 2 == 0 && j % 2 == 0) ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("maxpool2d backward matches finite differences on tie-free input") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const Tensor x = random_tensor({2, 4, 4}, rng);
    const MaxPoolResult r = maxpool2d(x);
    const Probe probe(r.out, rng);
    const Tensor analytic = maxpool2d_backward(x.shape(), r.argmax, probe.weights);
    const auto f = [&](const std::vector<double>& v) {
      return probe(maxpool2d(Tensor(x.shape(), v)).out);
    };
    // Uniform draws keep window values far apart with probability ~1; the
    // skip below guards the improbable near-tie anyway.
    const auto skip = [&](std::size_t i) {
      const std::size_t w = x.dim(2);
      const std::size_t h = x.dim(1);
      const std::size_t c = i / (h * w);
      const std::size_t row = (i / w) % h, col = i % w;
      const std::size_t r0 = row - row % 2, c0 = col - col % 2;
      double best = -1e300, second = -1e300;
      for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t b = 0; b < 2; ++b) {
          const double v = x.at(c, r0 + a, c0 + b);
          if (v > best) {
            second = best;
            best = v;
          } else if (v > second) {
            second = v;
          }
        }
      }
      return best - second < 1e-6;
    };
    const GradCheckReport report = grad_check(f, x.values(), analytic.values(), 1e-5, skip);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("dense matches hand arithmetic") {
  const Tensor W({2, 2}, {1, 1, 0, 1});
  CHECK(dense(Tensor::of({1, 2}), W, Tensor::of({1, 0})) == Tensor::of({4, 2}));
  // identity weights, zero bias: output equals input
  const Tensor id({2, 2}, {1, 0, 0, 1});
  CHECK(dense(Tensor::of({5, -3}), id, Tensor({2})) == Tensor::of({5, -3}));
  CHECK_THROWS_AS(dense(Tensor::of({1, 2, 3}), W, Tensor::of({1, 0})), ShapeError);
}

TEST_CASE("dense backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(400 + seed);
    const Tensor x = random_tensor({6}, rng);
    const Tensor W = random_tensor({4, 6}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Probe probe(dense(x, W, b), rng);
    const DenseGrads grads = dense_backward(x, W, probe.weights);

    const auto fx = [&](const std::vector<double>& v) {
      return probe(dense(Tensor(x.shape(), v), W, b));
    };
    CHECK(grad_check(fx, x.values(), grads.dx.values(), 1e-5).max_rel_error < 1e-4);
    const auto fw = [&](const std::vector<double>& v) {
      return probe(dense(x, Tensor(W.shape(), v), b));
    };
    CHECK(grad_check(fw, W.values(), grads.dweights.values(), 1e-5).max_rel_error < 1e-4);
    const auto fb = [&](const std::vector<double>& v) {
      return probe(dense(x, W, Tensor(b.shape(), v)));
    };
    CHECK(grad_check(fb, b.values(), grads.dbias.values(), 1e-5).max_rel_error < 1e-4);
  }
}

TEST_CASE("l2_normalize scales to unit length") {
  const Tensor out = l2_normalize(Tensor::of({3, 4}));
  CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-12));
  // any unit vector maps to itself
  const Tensor unit = Tensor::of({0.6, 0.8});
  const Tensor same = l2_normalize(unit, NormMode::strict);
  CHECK(std::abs(same[0] - 0.6) < 1e-15);
  CHECK(std::abs(same[1] - 0.8) < 1e-15);
  CHECK(std::abs(l2_normalize(Tensor::of({1e-3, 0}), NormMode::strict).l2_norm() - 1.0) < 1e-12);
}

TEST_CASE("l2_normalize strict mode rejects degenerate vectors") {
  CHECK_THROWS_AS(l2_normalize(Tensor::of({1e-10, 0}), NormMode::strict), DegeneratePair);
  // clamp mode divides by eps instead
  const Tensor out = l2_normalize(Tensor::of({1e-10, 0}), NormMode::clamp);
  CHECK(out[0] == doctest::Approx(1e-2));
}

TEST_CASE("l2_normalize backward matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(500 + seed);
    Tensor v = random_tensor({8}, rng);
    if (v.l2_norm() <= 0.1) continue;  // spec restricts the check to ||v|| > 0.1
    Probe probe(v, rng);
    const Tensor analytic = l2_normalize_backward(v, probe.weights, NormMode::strict);
    const auto f = [&](const std::vector<double>& x) {
      return probe(l2_normalize(Tensor(v.shape(), x), NormMode::strict));
    };
    CHECK(grad_check(f, v.values(), analytic.values(), 1e-5).max_rel_error < 1e-4);
  }
}

TEST_CASE("layer ops are deterministic") {
  Rng rng(600);
  const Tensor x = random_tensor({2, 4, 4}, rng);
  const Tensor k = random_tensor({2, 2, 3, 3}, rng);
  const Tensor b = random_tensor({2}, rng);
  CHECK(conv2d(x, k, b) == conv2d(x, k, b));
  CHECK(maxpool2d(x).out == maxpool2d(x).out);
  CHECK(l2_normalize(Tensor::of({1, 2, 3})) == l2_normalize(Tensor::of({1, 2, 3})));
}

}  // TEST_SUITE
