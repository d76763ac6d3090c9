#include "unisparse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace unisparse {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_to_string(shape_) + " holds " +
                     std::to_string(shape_size(shape_)) + " elements, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("tensor: index rank " + std::to_string(index.size()) +
                     " for shape " + shape_to_string(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw std::out_of_range("tensor: index out of range on axis " +
                              std::to_string(axis));
    }
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(shape_) +
                     " as " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

namespace {

struct ConvDims {
  std::size_t batch, channels, height, width, out_channels, kernel, out_h,
      out_w;
  bool batched;
};

ConvDims conv_dims(const Shape& input, const Shape& filters) {
  if (input.size() != 3 && input.size() != 4) {
    throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                     shape_to_string(input));
  }
  if (filters.size() != 4 || filters[2] != filters[3]) {
    throw ShapeError("conv2d: filters must be [D,C,r,r], got " +
                     shape_to_string(filters));
  }
  ConvDims d{};
  d.batched = input.size() == 4;
  const std::size_t o = d.batched ? 1 : 0;
  d.batch = d.batched ? input[0] : 1;
  d.channels = input[o];
  d.height = input[o + 1];
  d.width = input[o + 2];
  d.out_channels = filters[0];
  d.kernel = filters[2];
  if (filters[1] != d.channels) {
    throw ShapeError("conv2d: filters " + shape_to_string(filters) +
                     " expect " + std::to_string(filters[1]) +
                     " input channels, input " + shape_to_string(input) +
                     " has " + std::to_string(d.channels));
  }
  if (d.kernel == 0 || d.kernel > d.height || d.kernel > d.width) {
    throw ShapeError("conv2d: filter side " + std::to_string(d.kernel) +
                     " larger than input " + shape_to_string(input));
  }
  d.out_h = d.height - d.kernel + 1;
  d.out_w = d.width - d.kernel + 1;
  return d;
}

Shape conv_out_shape(const ConvDims& d) {
  if (d.batched) return {d.batch, d.out_channels, d.out_h, d.out_w};
  return {d.out_channels, d.out_h, d.out_w};
}

}  // namespace

CountedConv sparse_conv2d(const Tensor& input, const Tensor& filters) {
  const ConvDims d = conv_dims(input.shape(), filters.shape());
  CountedConv result{Tensor(conv_out_shape(d)), 0};
  const double* in = input.data().data();
  const double* w = filters.data().data();
  double* o = result.output.data().data();
  const std::size_t r = d.kernel;
  const std::uint64_t pixels = d.out_h * d.out_w;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
      double* plane = o + (n * d.out_channels + oc) * d.out_h * d.out_w;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const double* src = in + (n * d.channels + c) * d.height * d.width;
        const double* taps = w + (oc * d.channels + c) * r * r;
        for (std::size_t a = 0; a < r; ++a) {
          for (std::size_t b = 0; b < r; ++b) {
            const double tap = taps[a * r + b];
            if (tap == 0.0) continue;
            result.macs += pixels;
            for (std::size_t u = 0; u < d.out_h; ++u) {
              const double* row = src + (u + a) * d.width + b;
              double* dst = plane + u * d.out_w;
              for (std::size_t v = 0; v < d.out_w; ++v) dst[v] += tap * row[v];
            }
          }
        }
      }
    }
  }
  return result;
}

// Skipping a zero tap only drops "+ 0·x" terms, so this is conv2d exactly.
Tensor conv2d(const Tensor& input, const Tensor& filters) {
  return sparse_conv2d(input, filters).output;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& filters,
                         const Shape& input_shape) {
  const ConvDims d = conv_dims(input_shape, filters.shape());
  if (grad_out.shape() != conv_out_shape(d)) {
    throw ShapeError("conv2d backward: output gradient " +
                     shape_to_string(grad_out.shape()) + " does not match " +
                     shape_to_string(conv_out_shape(d)));
  }
  Tensor grad(input_shape);
  const double* g = grad_out.data().data();
  const double* w = filters.data().data();
  double* gi = grad.data().data();
  const std::size_t r = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
      const double* plane = g + (n * d.out_channels + oc) * d.out_h * d.out_w;
      for (std::size_t c = 0; c < d.channels; ++c) {
        double* dst = gi + (n * d.channels + c) * d.height * d.width;
        const double* taps = w + (oc * d.channels + c) * r * r;
        for (std::size_t a = 0; a < r; ++a) {
          for (std::size_t b = 0; b < r; ++b) {
            const double tap = taps[a * r + b];
            for (std::size_t u = 0; u < d.out_h; ++u) {
              double* row = dst + (u + a) * d.width + b;
              const double* src = plane + u * d.out_w;
              for (std::size_t v = 0; v < d.out_w; ++v) row[v] += tap * src[v];
            }
          }
        }
      }
    }
  }
  return grad;
}

Tensor conv2d_filter_grad(const Tensor& grad_out, const Tensor& input,
                          const Shape& filter_shape) {
  const ConvDims d = conv_dims(input.shape(), filter_shape);
  if (grad_out.shape() != conv_out_shape(d)) {
    throw ShapeError("conv2d backward: output gradient " +
                     shape_to_string(grad_out.shape()) + " does not match " +
                     shape_to_string(conv_out_shape(d)));
  }
  Tensor grad(filter_shape);
  const double* g = grad_out.data().data();
  const double* in = input.data().data();
  double* gw = grad.data().data();
  const std::size_t r = d.kernel;
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t oc = 0; oc < d.out_channels; ++oc) {
      const double* plane = g + (n * d.out_channels + oc) * d.out_h * d.out_w;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const double* src = in + (n * d.channels + c) * d.height * d.width;
        double* taps = gw + (oc * d.channels + c) * r * r;
        for (std::size_t a = 0; a < r; ++a) {
          for (std::size_t b = 0; b < r; ++b) {
            double acc = 0.0;
            for (std::size_t u = 0; u < d.out_h; ++u) {
              const double* row = src + (u + a) * d.width + b;
              const double* gr = plane + u * d.out_w;
              for (std::size_t v = 0; v < d.out_w; ++v) acc += gr[v] * row[v];
            }
            taps[a * r + b] += acc;
          }
        }
      }
    }
  }
  return grad;
}

}  // namespace unisparse
