#include "unisparse/deploy.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace unisparse {

namespace {

void measure(DeployedModel& m) {
  const bool wino = m.domain == Domain::winograd;
  m.sparsity = wino ? sparsity_report(m.net, m.weights, m.banks) : sparsity_report(m.net, m.weights);
  m.profile = {};
  for (std::size_t l = 0; l < m.weights.count(); ++l) {
    const std::size_t layer = m.weights.layers[l];
    const Tensor& w = m.weights.tensors[l];
    const auto zeros = static_cast<std::uint64_t>(
        std::count(w.data().begin(), w.data().end(), 0.0));
    m.profile.spatial[layer] = Fraction{zeros, w.size()};
    if (wino && m.banks[l]) {
      const auto& b = *m.banks[l];
      m.profile.winograd[layer] = Fraction{b.total() - b.nonzero_count(), b.total()};
    }
  }
  m.macs = count_macs(m.net, wino ? MacDomain::both : MacDomain::spatial, m.profile,
                      CountingPolicy::elementwise_only);
}

}  // namespace

DeployedModel deploy_spatial(const NetworkSpec& net, const FilterBank& weights) {
  require_executable(net);
  DeployedModel m;
  m.domain = Domain::spatial;
  m.net = net;
  m.weights = weights;
  measure(m);
  return m;
}

DeployedModel deploy_spatial(const CompressedModel& model) {
  return deploy_spatial(model.net, reconstruct(model));
}

DeployedModel deploy_spatial(std::span<const std::uint8_t> container) {
  return deploy_spatial(read_container(container));
}

DeployedModel deploy_winograd(const NetworkSpec& net, const FilterBank& weights, double s_wd,
                              ThresholdScope scope) {
  require_executable(net);
  if (!net.has_winograd_layers()) {
    throw SpecError(net.name +
                    " has no Winograd-eligible layers; deploy in the spatial domain instead");
  }
  DeployedModel m;
  m.domain = Domain::winograd;
  m.net = net;
  m.weights = weights;
  PruneResult pr = prune_winograd(weights, plans_for(net), s_wd, scope);
  m.banks = std::move(pr.winograd);
  measure(m);
  return m;
}

DeployedModel deploy_winograd(const CompressedModel& model, double s_wd, ThresholdScope scope) {
  return deploy_winograd(model.net, reconstruct(model), s_wd, scope);
}

DeployedModel deploy_winograd(std::span<const std::uint8_t> container, double s_wd,
                              ThresholdScope scope) {
  return deploy_winograd(read_container(container), s_wd, scope);
}

Tensor run(const DeployedModel& model, const Tensor& batch, std::vector<std::uint64_t>* macs) {
  return model.domain == Domain::winograd
             ? infer_winograd(model.net, model.weights, model.banks, batch, macs)
             : infer_spatial(model.net, model.weights, batch, macs);
}

Evaluation evaluate(const DeployedModel& model, const DatasetHandle& data, const Dataset& split,
                    std::size_t batch_size) {
  if (split.height != model.net.input_h || split.width != model.net.input_w) {
    throw ShapeError("evaluate: dataset images do not match " + model.net.name + " input");
  }
  Evaluation ev;
  const std::size_t n = split.size();
  std::size_t hit1 = 0, hit5 = 0;
  std::vector<std::uint64_t> macs;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = run(model, data.images(split, idx), ev.layer_macs.empty() ? &macs : nullptr);
    if (ev.layer_macs.empty()) {
      ev.layer_macs.resize(macs.size());
      for (std::size_t l = 0; l < macs.size(); ++l) ev.layer_macs[l] = macs[l] / idx.size();
    }
    const Accuracy a = accuracy(logits, data.labels(split, idx));
    hit1 += a.top1_hits;
    hit5 += a.top5_hits;
  }
  ev.accuracy.samples = n;
  ev.accuracy.top1_hits = hit1;
  ev.accuracy.top5_hits = hit5;
  if (n > 0) {
    ev.accuracy.top1 = static_cast<double>(hit1) / static_cast<double>(n);
    ev.accuracy.top5 = static_cast<double>(hit5) / static_cast<double>(n);
  }
  ev.total_macs = std::accumulate(ev.layer_macs.begin(), ev.layer_macs.end(), std::uint64_t{0});
  return ev;
}

std::string evaluation_csv(const DeployedModel& model, const Evaluation& eval) {
  std::ostringstream os;
  os << "domain,layer,zeros,total,sparsity,macs_per_image,top1,top5\n";
  const char* domain = to_string(model.domain);
  char buf[128];
  for (std::size_t l = 0; l < model.sparsity.layers.size(); ++l) {
    const auto& row = model.sparsity.layers[l];
    std::snprintf(buf, sizeof buf, "%.6f,%llu,,", row.ratio(),
                  static_cast<unsigned long long>(l < eval.layer_macs.size() ? eval.layer_macs[l] : 0));
    os << domain << ',' << row.name << ',' << row.zeros << ',' << row.total << ',' << buf << '\n';
  }
  const auto& all = model.sparsity.overall;
  std::snprintf(buf, sizeof buf, "%.6f,%llu,%.6f,%.6f", all.ratio(),
                static_cast<unsigned long long>(eval.total_macs), eval.accuracy.top1,
                eval.accuracy.top5);
  os << domain << ",total," << all.zeros << ',' << all.total << ',' << buf << '\n';
  return os.str();
}

}  // namespace unisparse
