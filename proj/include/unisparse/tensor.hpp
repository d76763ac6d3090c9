#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisparse {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Thrown when operand extents do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor of doubles. The element count always equals the
/// product of the extents.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor vector(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  /// Same data, new extents; the element count must match.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

/// Valid cross-correlation (no filter flip, stride 1, no padding).
/// Accepts input [C,H,W] with filters [D,C,r,r] giving [D,H-r+1,W-r+1],
/// or a batched input [N,C,H,W] giving [N,D,H-r+1,W-r+1].
Tensor conv2d(const Tensor& input, const Tensor& filters);

/// conv2d that skips zero taps and counts the multiply-accumulates it does
/// perform. The output is bit-identical to conv2d.
struct CountedConv {
  Tensor output;
  std::uint64_t macs = 0;
};
CountedConv sparse_conv2d(const Tensor& input, const Tensor& filters);

/// Gradients of conv2d with respect to its input and its filters given the
/// output gradient. Shapes follow the forward call.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& filters,
                         const Shape& input_shape);
Tensor conv2d_filter_grad(const Tensor& grad_out, const Tensor& input,
                          const Shape& filter_shape);

}  // namespace unisparse
