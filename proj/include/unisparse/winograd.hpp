#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "unisparse/tensor.hpp"

namespace unisparse {

/// Exact rational with a positive, reduced denominator.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const {
    return static_cast<double>(num_) / static_cast<double>(den_);
  }
  std::string to_string() const;
  int sign() const { return (num_ > 0) - (num_ < 0); }
  Rational abs() const { return Rational(num_ < 0 ? -num_ : num_, den_); }

  friend Rational operator+(Rational a, Rational b);
  friend Rational operator-(Rational a, Rational b);
  friend Rational operator*(Rational a, Rational b);
  friend Rational operator/(Rational a, Rational b);
  Rational operator-() const { return Rational(-num_, den_); }
  friend bool operator==(Rational a, Rational b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Small dense row-major matrix.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> v;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c) {}
  T& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

/// Transform matrices of Winograd convolution for an r×r filter on n×n input
/// patches, producing m×m output patches with m = n - r + 1:
///
///   y = Sᵀ ((G w Gᵀ) ⊙ (F x Fᵀ)) S
///
/// computing the valid cross-correlation of x with w. The matrices come from
/// Cook–Toom interpolation at 0, 1, -1, 2, -2, 1/2, -1/2 (as many as needed)
/// plus the point at infinity; the Lagrange denominators are folded into G.
struct WinogradPlan {
  int r = 0;
  int n = 0;
  int m = 0;
  Matrix<Rational> F_exact;  // n×n input transform
  Matrix<Rational> G_exact;  // n×r filter transform
  Matrix<Rational> S_exact;  // n×m output transform
  Matrix<double> F;
  Matrix<double> G;
  Matrix<double> S;
  std::vector<Rational> points;  // the n-1 finite interpolation points

  /// Matrices as exact rationals, one row per line.
  std::string describe() const;
};

/// Requires 1 ≤ r ≤ n ≤ 8.
WinogradPlan build_plan(int r, int n);

/// G w Gᵀ for an r×r filter.
Tensor transform_filter(const Tensor& w, const WinogradPlan& plan);
/// Adjoint of transform_filter: Gᵀ dW G, mapping an n×n gradient back to r×r.
Tensor transform_filter_adjoint(const Tensor& grad, const WinogradPlan& plan);
/// F x Fᵀ for an n×n patch.
Tensor transform_input(const Tensor& x, const WinogradPlan& plan);
/// Sᵀ M S for an n×n Winograd-domain product.
Tensor transform_output(const Tensor& product, const WinogradPlan& plan);

/// Winograd-domain weights of one convolutional layer. weights is
/// [D,C,n,n]; pruned marks positions that are fixed at zero.
struct WinogradFilterBank {
  WinogradPlan plan;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  Tensor weights;
  std::vector<std::uint8_t> pruned;

  std::size_t total() const { return weights.size(); }
  std::size_t pruned_count() const;
  std::size_t nonzero_count() const;
  /// Sets masked entries to zero and records them as pruned.
  void apply_mask(const std::vector<std::uint8_t>& mask);
};

/// Transforms every [d,c] filter of a [D,C,r,r] tensor; nothing is pruned.
WinogradFilterBank make_filter_bank(const Tensor& filters, const WinogradPlan& plan);

/// Number of m×m output tiles along one axis for a valid output extent.
std::size_t tile_count(std::size_t out_extent, const WinogradPlan& plan);

/// Dense Winograd convolution equal to conv2d up to rounding. Input is
/// [C,H,W] or [N,C,H,W]; output extents not divisible by m are handled by
/// zero-padding the bottom/right of the input and cropping.
Tensor winograd_conv2d(const Tensor& input, const Tensor& filters,
                       const WinogradPlan& plan);

struct SparseConvResult {
  Tensor output;
  std::uint64_t elementwise_macs = 0;
};

/// Winograd convolution that skips pruned Winograd-domain weights. The MAC
/// count covers only the element-wise products actually performed.
SparseConvResult sparse_winograd_conv2d(const Tensor& input,
                                        const WinogradFilterBank& bank,
                                        const WinogradPlan& plan);

}  // namespace unisparse
