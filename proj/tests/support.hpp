#pragma once

// Test-only oracles. Nothing here calls into the optimized kernels it is used
// to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "unisparse/rng.hpp"
#include "unisparse/tensor.hpp"

namespace testing_support {

using unisparse::Shape;
using unisparse::Tensor;

inline Tensor random_tensor(Shape shape, unisparse::SplitMix64& rng,
                            double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Six nested loops, literally the definition of valid cross-correlation.
inline Tensor naive_conv2d(const Tensor& input, const Tensor& filters) {
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t D = filters.dim(0), r = filters.dim(2);
  Tensor out({D, H - r + 1, W - r + 1});
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t u = 0; u + r <= H; ++u)
      for (std::size_t v = 0; v + r <= W; ++v) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b < r; ++b)
              acc += input.at({c, u + a, v + b}) * filters.at({d, c, a, b});
        out.at({d, u, v}) = acc;
      }
  return out;
}

/// Central finite differences of a scalar function of one tensor.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                                Tensor x, double step = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1e-3, max|b|): relative to the gradient scale, so
/// isolated near-zero components do not blow up the ratio.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double scale = 1e-8;
  double err = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    scale = std::max(scale, std::abs(numeric[i]));
    err = std::max(err, std::abs(analytic[i] - numeric[i]));
  }
  return err / std::max(scale, 1e-3);
}

}  // namespace testing_support
