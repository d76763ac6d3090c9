#include "unisparse/winograd.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace unisparse {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::domain_error("rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g ? num / g : 0;
  den_ = g ? den / g : 1;
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(Rational a, Rational b) {
  return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}
Rational operator-(Rational a, Rational b) { return a + (-b); }
Rational operator*(Rational a, Rational b) {
  return Rational(a.num_ * b.num_, a.den_ * b.den_);
}
Rational operator/(Rational a, Rational b) {
  if (b.num_ == 0) throw std::domain_error("rational: division by zero");
  return Rational(a.num_ * b.den_, a.den_ * b.num_);
}

namespace {

// Finite Cook–Toom points in the order they are consumed.
const Rational kPoints[] = {Rational(0),  Rational(1),     Rational(-1),
                            Rational(2),  Rational(-2),    Rational(1, 2),
                            Rational(-1, 2)};

using Poly = std::vector<Rational>;  // coefficients, lowest degree first

Poly times_linear(const Poly& p, Rational root) {
  // p(x)·(x - root)
  Poly out(p.size() + 1, Rational(0));
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i + 1] = out[i + 1] + p[i];
    out[i] = out[i] - p[i] * root;
  }
  return out;
}

Matrix<Rational> evaluation_matrix(const std::vector<Rational>& points,
                                   std::size_t degree_plus_one) {
  const std::size_t n = points.size() + 1;
  Matrix<Rational> e(n, degree_plus_one);
  for (std::size_t k = 0; k < points.size(); ++k) {
    Rational p(1);
    for (std::size_t j = 0; j < degree_plus_one; ++j) {
      e(k, j) = p;
      p = p * points[k];
    }
  }
  // Point at infinity picks the leading coefficient.
  e(n - 1, degree_plus_one - 1) = Rational(1);
  return e;
}

Matrix<double> to_double(const Matrix<Rational>& m) {
  Matrix<double> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i].to_double();
  return out;
}

void append_matrix(std::ostringstream& os, const char* name,
                   const Matrix<Rational>& m) {
  os << name << " (" << m.rows << "x" << m.cols << "):\n";
  for (std::size_t i = 0; i < m.rows; ++i) {
    os << "  [";
    for (std::size_t j = 0; j < m.cols; ++j) {
      if (j) os << ", ";
      os << m(i, j).to_string();
    }
    os << "]\n";
  }
}

// out = A · B for square-ish small matrices stored row-major.
void matmul(const double* a, const double* b, double* out, std::size_t rows,
            std::size_t inner, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += a[i * inner + k] * b[k * cols + j];
      out[i * cols + j] = acc;
    }
  }
}

// out = A · X · Aᵀ with A rows×inner and X inner×inner.
void sandwich(const Matrix<double>& a, const double* x, double* tmp, double* out) {
  const std::size_t rows = a.rows;
  const std::size_t inner = a.cols;
  matmul(a.v.data(), x, tmp, rows, inner, inner);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < rows; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += tmp[i * inner + k] * a(j, k);
      out[i * rows + j] = acc;
    }
  }
}

// out = Aᵀ · X · A with A inner×cols and X inner×inner.
void sandwich_transposed(const Matrix<double>& a, const double* x, double* tmp,
                         double* out) {
  const std::size_t inner = a.rows;
  const std::size_t cols = a.cols;
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < inner; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += a(k, i) * x[k * inner + j];
      tmp[i * inner + j] = acc;
    }
  }
  matmul(tmp, a.v.data(), out, cols, inner, cols);
}

void require_square(const Tensor& t, std::size_t side, const char* what) {
  if (t.rank() != 2 || t.dim(0) != side || t.dim(1) != side) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(side) +
                     "x" + std::to_string(side) + ", got " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

std::string WinogradPlan::describe() const {
  std::ostringstream os;
  os << "winograd plan r=" << r << " n=" << n << " m=" << m << "\npoints: ";
  for (const Rational& p : points) os << p.to_string() << ' ';
  os << "inf\n";
  append_matrix(os, "F", F_exact);
  append_matrix(os, "G", G_exact);
  append_matrix(os, "S", S_exact);
  return os.str();
}

WinogradPlan build_plan(int r, int n) {
  if (r < 1) throw std::invalid_argument("build_plan: r must be >= 1");
  if (r > n) {
    throw std::invalid_argument("build_plan: filter side r=" + std::to_string(r) +
                                " exceeds patch side n=" + std::to_string(n));
  }
  if (n > 8) {
    throw std::invalid_argument("build_plan: n=" + std::to_string(n) +
                                " exceeds 8; transforms become ill-conditioned");
  }
  WinogradPlan plan;
  plan.r = r;
  plan.n = n;
  plan.m = n - r + 1;
  const auto nn = static_cast<std::size_t>(n);
  plan.points.assign(std::begin(kPoints), std::begin(kPoints) + (nn - 1));

  const Matrix<Rational> eval_filter =
      evaluation_matrix(plan.points, static_cast<std::size_t>(r));
  const Matrix<Rational> eval_output =
      evaluation_matrix(plan.points, static_cast<std::size_t>(plan.m));

  // Column k of the interpolation matrix holds the numerator polynomial of the
  // k-th Lagrange basis function; the last column is Π(x - p_j) for infinity.
  Matrix<Rational> interp(nn, nn);
  std::vector<Rational> denom(nn, Rational(1));
  for (std::size_t k = 0; k < nn; ++k) {
    Poly p{Rational(1)};
    for (std::size_t j = 0; j + 1 < nn; ++j) {
      if (j == k) continue;
      p = times_linear(p, plan.points[j]);
      if (k + 1 < nn) denom[k] = denom[k] * (plan.points[k] - plan.points[j]);
    }
    for (std::size_t i = 0; i < p.size() && i < nn; ++i) interp(i, k) = p[i];
  }

  plan.F_exact = Matrix<Rational>(nn, nn);
  plan.G_exact = Matrix<Rational>(nn, static_cast<std::size_t>(r));
  plan.S_exact = eval_output;
  for (std::size_t k = 0; k < nn; ++k) {
    const Rational sign(denom[k].sign());
    const Rational mag = denom[k].abs();
    for (std::size_t i = 0; i < nn; ++i) plan.F_exact(k, i) = sign * interp(i, k);
    for (std::size_t j = 0; j < static_cast<std::size_t>(r); ++j) {
      plan.G_exact(k, j) = eval_filter(k, j) / mag;
    }
  }
  plan.F = to_double(plan.F_exact);
  plan.G = to_double(plan.G_exact);
  plan.S = to_double(plan.S_exact);
  return plan;
}

Tensor transform_filter(const Tensor& w, const WinogradPlan& plan) {
  require_square(w, static_cast<std::size_t>(plan.r), "transform_filter");
  const auto n = static_cast<std::size_t>(plan.n);
  Tensor out({n, n});
  std::vector<double> tmp(n * static_cast<std::size_t>(plan.r));
  sandwich(plan.G, w.data().data(), tmp.data(), out.data().data());
  return out;
}

Tensor transform_filter_adjoint(const Tensor& grad, const WinogradPlan& plan) {
  require_square(grad, static_cast<std::size_t>(plan.n), "transform_filter_adjoint");
  const auto r = static_cast<std::size_t>(plan.r);
  Tensor out({r, r});
  std::vector<double> tmp(r * static_cast<std::size_t>(plan.n));
  sandwich_transposed(plan.G, grad.data().data(), tmp.data(), out.data().data());
  return out;
}

Tensor transform_input(const Tensor& x, const WinogradPlan& plan) {
  const auto n = static_cast<std::size_t>(plan.n);
  require_square(x, n, "transform_input");
  Tensor out({n, n});
  std::vector<double> tmp(n * n);
  sandwich(plan.F, x.data().data(), tmp.data(), out.data().data());
  return out;
}

Tensor transform_output(const Tensor& product, const WinogradPlan& plan) {
  const auto n = static_cast<std::size_t>(plan.n);
  require_square(product, n, "transform_output");
  const auto m = static_cast<std::size_t>(plan.m);
  Tensor out({m, m});
  std::vector<double> tmp(m * n);
  sandwich_transposed(plan.S, product.data().data(), tmp.data(), out.data().data());
  return out;
}

std::size_t WinogradFilterBank::pruned_count() const {
  std::size_t c = 0;
  for (auto p : pruned) c += p ? 1 : 0;
  return c;
}

std::size_t WinogradFilterBank::nonzero_count() const {
  std::size_t c = 0;
  for (double v : weights.data()) c += v != 0.0 ? 1 : 0;
  return c;
}

void WinogradFilterBank::apply_mask(const std::vector<std::uint8_t>& mask) {
  if (mask.size() != weights.size()) {
    throw ShapeError("apply_mask: mask of " + std::to_string(mask.size()) +
                     " entries for bank of " + std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      pruned[i] = 1;
      weights[i] = 0.0;
    }
  }
}

WinogradFilterBank make_filter_bank(const Tensor& filters, const WinogradPlan& plan) {
  const auto r = static_cast<std::size_t>(plan.r);
  if (filters.rank() != 4 || filters.dim(2) != r || filters.dim(3) != r) {
    throw ShapeError("make_filter_bank: filters " + shape_to_string(filters.shape()) +
                     " do not match plan r=" + std::to_string(plan.r));
  }
  WinogradFilterBank bank;
  bank.plan = plan;
  bank.out_channels = filters.dim(0);
  bank.in_channels = filters.dim(1);
  const auto n = static_cast<std::size_t>(plan.n);
  bank.weights = Tensor({bank.out_channels, bank.in_channels, n, n});
  bank.pruned.assign(bank.weights.size(), 0);
  std::vector<double> tmp(n * r);
  for (std::size_t f = 0; f < bank.out_channels * bank.in_channels; ++f) {
    sandwich(plan.G, filters.data().data() + f * r * r, tmp.data(),
             bank.weights.data().data() + f * n * n);
  }
  return bank;
}

std::size_t tile_count(std::size_t out_extent, const WinogradPlan& plan) {
  const auto m = static_cast<std::size_t>(plan.m);
  return (out_extent + m - 1) / m;
}

SparseConvResult sparse_winograd_conv2d(const Tensor& input,
                                        const WinogradFilterBank& bank,
                                        const WinogradPlan& plan) {
  if (bank.plan.r != plan.r || bank.plan.n != plan.n) {
    throw std::invalid_argument("sparse_winograd_conv2d: bank built for (" +
                                std::to_string(bank.plan.r) + "," +
                                std::to_string(bank.plan.n) + "), plan is (" +
                                std::to_string(plan.r) + "," +
                                std::to_string(plan.n) + ")");
  }
  if (input.rank() != 3 && input.rank() != 4) {
    throw ShapeError("winograd_conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                     shape_to_string(input.shape()));
  }
  const bool batched = input.rank() == 4;
  const std::size_t o = batched ? 1 : 0;
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t channels = input.dim(o);
  const std::size_t height = input.dim(o + 1);
  const std::size_t width = input.dim(o + 2);
  const auto r = static_cast<std::size_t>(plan.r);
  const auto n = static_cast<std::size_t>(plan.n);
  const auto m = static_cast<std::size_t>(plan.m);
  if (channels != bank.in_channels) {
    throw ShapeError("winograd_conv2d: input " + shape_to_string(input.shape()) +
                     " has " + std::to_string(channels) + " channels, filters expect " +
                     std::to_string(bank.in_channels));
  }
  if (r > height || r > width) {
    throw ShapeError("winograd_conv2d: filter side " + std::to_string(r) +
                     " larger than input " + shape_to_string(input.shape()));
  }
  const std::size_t out_h = height - r + 1;
  const std::size_t out_w = width - r + 1;
  const std::size_t tiles_h = tile_count(out_h, plan);
  const std::size_t tiles_w = tile_count(out_w, plan);
  const std::size_t depth = bank.out_channels;
  const std::size_t nn = n * n;

  // Nonzero positions per (d, c) filter; zero weights contribute nothing.
  std::vector<std::vector<std::size_t>> active(depth * channels);
  for (std::size_t f = 0; f < depth * channels; ++f) {
    for (std::size_t i = 0; i < nn; ++i) {
      if (bank.weights[f * nn + i] != 0.0) active[f].push_back(i);
    }
  }

  SparseConvResult result;
  result.output = batched ? Tensor({batch, depth, out_h, out_w})
                          : Tensor({depth, out_h, out_w});
  std::vector<double> patch(nn), tmp(nn), transformed(channels * nn), acc(nn),
      y(m * m);
  const double* in = input.data().data();
  double* out = result.output.data().data();
  const double* wts = bank.weights.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ti = 0; ti < tiles_h; ++ti) {
      for (std::size_t tj = 0; tj < tiles_w; ++tj) {
        const std::size_t row0 = ti * m;
        const std::size_t col0 = tj * m;
        for (std::size_t c = 0; c < channels; ++c) {
          const double* plane = in + (b * channels + c) * height * width;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t u = row0 + i;
              const std::size_t v = col0 + j;
              patch[i * n + j] = (u < height && v < width) ? plane[u * width + v] : 0.0;
            }
          }
          sandwich(plan.F, patch.data(), tmp.data(), transformed.data() + c * nn);
        }
        for (std::size_t d = 0; d < depth; ++d) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t f = d * channels + c;
            const double* wf = wts + f * nn;
            const double* xf = transformed.data() + c * nn;
            for (std::size_t i : active[f]) acc[i] += wf[i] * xf[i];
            result.elementwise_macs += active[f].size();
          }
          sandwich_transposed(plan.S, acc.data(), tmp.data(), y.data());
          double* plane = out + (b * depth + d) * out_h * out_w;
          for (std::size_t i = 0; i < m && row0 + i < out_h; ++i) {
            for (std::size_t j = 0; j < m && col0 + j < out_w; ++j) {
              plane[(row0 + i) * out_w + col0 + j] = y[i * m + j];
            }
          }
        }
      }
    }
  }
  return result;
}

Tensor winograd_conv2d(const Tensor& input, const Tensor& filters,
                       const WinogradPlan& plan) {
  return sparse_winograd_conv2d(input, make_filter_bank(filters, plan), plan).output;
}

}  // namespace unisparse
