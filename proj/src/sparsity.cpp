#include "unisparse/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace unisparse {

const char* to_string(ThresholdScope scope) {
  return scope == ThresholdScope::global ? "global" : "per-layer";
}

ThresholdScope parse_scope(const std::string& s) {
  if (s == "global") return ThresholdScope::global;
  if (s == "per-layer") return ThresholdScope::per_layer;
  throw std::invalid_argument("unknown threshold scope '" + s + "' (expected global or per-layer)");
}

void SparsityConfig::validate() const {
  auto percent = [](double s, const char* what) {
    if (!(s >= 0.0 && s <= 100.0)) {
      throw std::invalid_argument(std::string(what) + " must be in [0, 100], got " +
                                  std::to_string(s));
    }
  };
  percent(s_wd, "s_wd");
  percent(s_sd, "s_sd");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

double percentile_threshold(std::span<const double> magnitudes, double s) {
  if (magnitudes.empty()) throw std::invalid_argument("percentile_threshold: empty list");
  if (!(s >= 0.0 && s <= 100.0)) {
    throw std::invalid_argument("percentile_threshold: s must be in [0, 100]");
  }
  if (s == 0.0) return -std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(magnitudes.size());
  auto rank = static_cast<std::size_t>(std::ceil(s * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, magnitudes.size());
  std::vector<double> sorted(magnitudes.begin(), magnitudes.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   sorted.end());
  return sorted[rank - 1];
}

namespace {

std::vector<double> abs_values(std::span<const double> v) {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::fabs(x); });
  return out;
}

// Per-layer values in some domain plus a way to map their gradient back.
struct DomainView {
  std::vector<std::size_t> layers;   // FilterBank indices that participate
  std::vector<Tensor> values;        // domain weights per participating layer
};

RegularizerValue partial_l2(const DomainView& view, double s, ThresholdScope scope,
                            std::vector<Tensor>& domain_grads) {
  RegularizerValue out;
  for (const Tensor& t : view.values) out.population += t.size();
  if (out.population == 0) throw std::invalid_argument("partial L2: no weights to regularize");

  std::vector<double> theta(view.values.size());
  if (scope == ThresholdScope::global) {
    std::vector<double> all;
    all.reserve(out.population);
    for (const Tensor& t : view.values)
      for (double v : t.data()) all.push_back(std::fabs(v));
    const double th = percentile_threshold(all, s);
    std::fill(theta.begin(), theta.end(), th);
    out.thresholds = {th};
  } else {
    for (std::size_t l = 0; l < view.values.size(); ++l) {
      theta[l] = percentile_threshold(abs_values(view.values[l].data()), s);
    }
    out.thresholds = theta;
  }

  const double inv_n = 1.0 / static_cast<double>(out.population);
  domain_grads.clear();
  for (std::size_t l = 0; l < view.values.size(); ++l) {
    const Tensor& t = view.values[l];
    Tensor g(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::fabs(t[i]) <= theta[l]) {
        out.value += t[i] * t[i];
        g[i] = 2.0 * t[i] * inv_n;
        ++out.regularized;
      }
    }
    domain_grads.push_back(std::move(g));
  }
  out.value *= inv_n;
  return out;
}

Tensor filter_slice(const Tensor& bank, std::size_t index, std::size_t r) {
  std::vector<double> v(bank.data().begin() + static_cast<std::ptrdiff_t>(index * r * r),
                        bank.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * r * r));
  return Tensor({r, r}, std::move(v));
}

Tensor to_winograd(const Tensor& w, const WinogradPlan& plan) {
  const std::size_t r = w.dim(2), n = static_cast<std::size_t>(plan.n);
  const std::size_t filters = w.dim(0) * w.dim(1);
  Tensor out({w.dim(0), w.dim(1), n, n});
  for (std::size_t f = 0; f < filters; ++f) {
    Tensor t = transform_filter(filter_slice(w, f, r), plan);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(f * n * n));
  }
  return out;
}

Tensor from_winograd_grad(const Tensor& g, const WinogradPlan& plan, std::size_t r) {
  const std::size_t n = static_cast<std::size_t>(plan.n);
  const std::size_t filters = g.dim(0) * g.dim(1);
  Tensor out({g.dim(0), g.dim(1), r, r});
  for (std::size_t f = 0; f < filters; ++f) {
    Tensor t = transform_filter_adjoint(filter_slice(g, f, n), plan);
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(f * r * r));
  }
  return out;
}

void check_plans(const FilterBank& weights, const PlanSet& plans) {
  if (plans.size() != weights.count()) {
    throw std::invalid_argument("winograd regularizer: " + std::to_string(plans.size()) +
                                " plans for " + std::to_string(weights.count()) + " layers");
  }
  bool any = false;
  for (std::size_t l = 0; l < plans.size(); ++l) {
    if (!plans[l]) continue;
    any = true;
    const Tensor& w = weights.tensors[l];
    if (w.rank() != 4 || w.dim(2) != static_cast<std::size_t>(plans[l]->r) ||
        w.dim(3) != w.dim(2)) {
      throw std::invalid_argument("winograd regularizer: layer " + std::to_string(l) +
                                  " weights " + shape_to_string(w.shape()) +
                                  " do not fit a plan with r=" + std::to_string(plans[l]->r));
    }
  }
  if (!any) throw std::invalid_argument("winograd regularizer: no layer has a Winograd plan");
}

}  // namespace

std::vector<double> winograd_magnitudes(const FilterBank& weights, const PlanSet& plans) {
  check_plans(weights, plans);
  std::vector<double> out;
  for (std::size_t l = 0; l < plans.size(); ++l) {
    if (!plans[l]) continue;
    Tensor t = to_winograd(weights.tensors[l], *plans[l]);
    for (double v : t.data()) out.push_back(std::fabs(v));
  }
  return out;
}

RegularizerValue winograd_partial_l2(const FilterBank& weights, const PlanSet& plans, double s,
                                     ThresholdScope scope) {
  check_plans(weights, plans);
  DomainView view;
  for (std::size_t l = 0; l < plans.size(); ++l) {
    if (!plans[l]) continue;
    view.layers.push_back(l);
    view.values.push_back(to_winograd(weights.tensors[l], *plans[l]));
  }
  std::vector<Tensor> grads;
  RegularizerValue out = partial_l2(view, s, scope, grads);
  out.gradient = zeros_like(weights);
  for (std::size_t k = 0; k < view.layers.size(); ++k) {
    const std::size_t l = view.layers[k];
    out.gradient.tensors[l] = from_winograd_grad(grads[k], *plans[l], weights.tensors[l].dim(2));
  }
  return out;
}

RegularizerValue spatial_partial_l2(const FilterBank& weights, double s, ThresholdScope scope) {
  DomainView view;
  for (std::size_t l = 0; l < weights.count(); ++l) {
    view.layers.push_back(l);
    view.values.push_back(weights.tensors[l]);
  }
  std::vector<Tensor> grads;
  RegularizerValue out = partial_l2(view, s, scope, grads);
  out.gradient.layers = weights.layers;
  out.gradient.tensors = std::move(grads);
  return out;
}

JointCost joint_cost(double e, double r_wd, double r_sd, double zeta_wd, double zeta_sd,
                     double alpha) {
  const double c_wd = std::exp(zeta_wd), c_sd = std::exp(zeta_sd);
  JointCost out;
  out.cost = e + c_wd * r_wd + c_sd * r_sd - alpha * (zeta_wd + zeta_sd);
  out.d_zeta_wd = c_wd * r_wd - alpha;
  out.d_zeta_sd = c_sd * r_sd - alpha;
  return out;
}

}  // namespace unisparse
