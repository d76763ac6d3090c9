#include "unisparse/pruning.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace unisparse {

WinogradBanks to_winograd_banks(const FilterBank& weights, const PlanSet& plans) {
  if (plans.size() != weights.count()) {
    throw std::invalid_argument("winograd transform: " + std::to_string(plans.size()) +
                                " plans for " + std::to_string(weights.count()) + " layers");
  }
  WinogradBanks banks(plans.size());
  for (std::size_t l = 0; l < plans.size(); ++l) {
    if (plans[l]) banks[l] = make_filter_bank(weights.tensors[l], *plans[l]);
  }
  return banks;
}

namespace {

// Per-layer thresholds for a list of value tensors; null entries skipped.
std::vector<double> thresholds_for(const std::vector<const Tensor*>& layers, double s,
                                   ThresholdScope scope, std::vector<double>& reported) {
  std::vector<double> theta(layers.size(), -INFINITY);
  if (scope == ThresholdScope::global) {
    std::vector<double> all;
    for (const Tensor* t : layers)
      if (t)
        for (double v : t->data()) all.push_back(std::fabs(v));
    if (all.empty()) throw std::invalid_argument("prune: no weights");
    const double th = percentile_threshold(all, s);
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l]) theta[l] = th;
    reported = {th};
  } else {
    reported.clear();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (!layers[l]) continue;
      std::vector<double> mags(layers[l]->size());
      for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::fabs((*layers[l])[i]);
      theta[l] = percentile_threshold(mags, s);
      reported.push_back(theta[l]);
    }
  }
  return theta;
}

std::vector<std::uint8_t> mask_below(const Tensor& t, double theta, std::size_t& pruned) {
  std::vector<std::uint8_t> m(t.size(), 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::fabs(t[i]) <= theta) {
      m[i] = 1;
      ++pruned;
    }
  }
  return m;
}

}  // namespace

PruneResult prune_spatial(const FilterBank& weights, double s, ThresholdScope scope) {
  PruneResult res;
  res.spatial = weights;
  res.mask.domain = Domain::spatial;
  std::vector<const Tensor*> views;
  for (const Tensor& t : weights.tensors) views.push_back(&t);
  const auto theta = thresholds_for(views, s, scope, res.mask.thresholds);
  for (std::size_t l = 0; l < weights.count(); ++l) {
    Tensor& t = res.spatial.tensors[l];
    auto m = mask_below(t, theta[l], res.mask.pruned);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (m[i]) t[i] = 0.0;
    res.mask.total += t.size();
    res.mask.layers.push_back(std::move(m));
  }
  return res;
}

PruneMask prune_banks(WinogradBanks& banks, double s, ThresholdScope scope) {
  PruneMask mask;
  mask.domain = Domain::winograd;
  std::vector<const Tensor*> views;
  for (const auto& b : banks) views.push_back(b ? &b->weights : nullptr);
  bool any = false;
  for (const Tensor* v : views) any = any || v != nullptr;
  if (!any) {
    throw std::invalid_argument(
        "winograd pruning: no layer has a Winograd plan; prune in the spatial domain instead");
  }
  const auto theta = thresholds_for(views, s, scope, mask.thresholds);
  for (std::size_t l = 0; l < banks.size(); ++l) {
    if (!banks[l]) {
      mask.layers.emplace_back();
      continue;
    }
    std::size_t unused = 0;
    auto m = mask_below(banks[l]->weights, theta[l], unused);
    mask.total += m.size();
    // Positions pruned earlier stay pruned.
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = m[i] | banks[l]->pruned[i];
      mask.pruned += m[i];
    }
    banks[l]->apply_mask(m);
    mask.layers.push_back(std::move(m));
  }
  return mask;
}

PruneResult prune_winograd(const FilterBank& weights, const PlanSet& plans, double s,
                           ThresholdScope scope) {
  PruneResult res;
  res.spatial = weights;
  res.winograd = to_winograd_banks(weights, plans);
  res.mask = prune_banks(res.winograd, s, scope);
  return res;
}

PruneResult prune(const FilterBank& weights, const PlanSet& plans, Domain domain, double s,
                  ThresholdScope scope) {
  if (!(s >= 0.0 && s <= 100.0)) {
    throw std::invalid_argument("prune: s must be in [0, 100], got " + std::to_string(s));
  }
  return domain == Domain::spatial ? prune_spatial(weights, s, scope)
                                   : prune_winograd(weights, plans, s, scope);
}

namespace {

std::size_t zeros_in(const Tensor& t) {
  std::size_t z = 0;
  for (double v : t.data()) z += v == 0.0 ? 1 : 0;
  return z;
}

SparsityReport build_report(const NetworkSpec& net, const FilterBank& weights,
                            const WinogradBanks* banks, double target) {
  SparsityReport rep;
  rep.target = target;
  rep.overall.name = "overall";
  rep.overall.domain = banks ? "winograd" : "spatial";
  for (std::size_t l = 0; l < weights.count(); ++l) {
    LayerSparsity row;
    row.name = net.layers.at(weights.layers.at(l)).name;
    const bool wino = banks && l < banks->size() && (*banks)[l].has_value();
    const Tensor& t = wino ? (*banks)[l]->weights : weights.tensors[l];
    row.domain = wino ? "winograd" : "spatial";
    row.zeros = zeros_in(t);
    row.total = t.size();
    rep.overall.zeros += row.zeros;
    rep.overall.total += row.total;
    rep.layers.push_back(std::move(row));
  }
  return rep;
}

}  // namespace

SparsityReport sparsity_report(const NetworkSpec& net, const FilterBank& weights, double target) {
  return build_report(net, weights, nullptr, target);
}

SparsityReport sparsity_report(const NetworkSpec& net, const FilterBank& weights,
                               const WinogradBanks& banks, double target) {
  return build_report(net, weights, &banks, target);
}

std::string SparsityReport::to_csv() const {
  std::ostringstream os;
  os << "layer,domain,zeros,total,sparsity,target\n";
  auto line = [&](const LayerSparsity& l) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f", l.ratio(), target / 100.0);
    os << l.name << ',' << l.domain << ',' << l.zeros << ',' << l.total << ',' << buf << '\n';
  };
  for (const auto& l : layers) line(l);
  line(overall);
  return os.str();
}

std::string pattern_dump(const Tensor& filters, std::size_t max_out, std::size_t max_in) {
  if (filters.rank() != 4) {
    throw ShapeError("pattern_dump: expected [D,C,k,k], got " + shape_to_string(filters.shape()));
  }
  const std::size_t d_n = std::min(filters.dim(0), max_out);
  const std::size_t c_n = std::min(filters.dim(1), max_in);
  const std::size_t kh = filters.dim(2), kw = filters.dim(3);
  std::ostringstream os;
  for (std::size_t d = 0; d < d_n; ++d) {
    for (std::size_t y = 0; y < kh; ++y) {
      for (std::size_t c = 0; c < c_n; ++c) {
        if (c > 0) os << ' ';
        for (std::size_t x = 0; x < kw; ++x) {
          os << (filters.at({d, c, y, x}) == 0.0 ? '.' : '#');
        }
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace unisparse
