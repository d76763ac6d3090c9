#include "unisparse/model.hpp"

#include <cmath>

#include "unisparse/rng.hpp"

namespace unisparse {

const char* to_string(Domain domain) {
  return domain == Domain::spatial ? "spatial" : "winograd";
}

Domain parse_domain(const std::string& s) {
  if (s == "spatial") return Domain::spatial;
  if (s == "winograd") return Domain::winograd;
  throw std::invalid_argument("unknown domain '" + s + "' (expected spatial or winograd)");
}

std::size_t FilterBank::size() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors) n += t.size();
  return n;
}

std::vector<double> FilterBank::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const Tensor& t : tensors) flat.insert(flat.end(), t.data().begin(), t.data().end());
  return flat;
}

void FilterBank::assign(std::span<const double> flat) {
  if (flat.size() != size()) {
    throw ShapeError("FilterBank::assign: " + std::to_string(flat.size()) +
                     " values for " + std::to_string(size()) + " weights");
  }
  std::size_t off = 0;
  for (Tensor& t : tensors) {
    std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.data().begin());
    off += t.size();
  }
}

std::size_t FilterBank::zero_count() const {
  std::size_t z = 0;
  for (const Tensor& t : tensors)
    for (double v : t.data()) z += v == 0.0 ? 1 : 0;
  return z;
}

FilterBank zeros_like(const FilterBank& bank) {
  FilterBank z;
  z.layers = bank.layers;
  for (const Tensor& t : bank.tensors) z.tensors.emplace_back(t.shape());
  return z;
}

FilterBank init_filter_bank(const NetworkSpec& net, std::uint64_t seed) {
  SplitMix64 rng(seed);
  FilterBank bank;
  for (std::size_t i : net.weighted_layers()) {
    const LayerSpec& l = net.layers[i];
    Tensor t(l.weight_shape());
    const std::size_t fan_in = t.size() / t.dim(0);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = stddev * rng.normal();
    bank.tensors.push_back(std::move(t));
    bank.layers.push_back(i);
  }
  return bank;
}

PlanSet plans_for(const NetworkSpec& net) {
  PlanSet plans;
  for (std::size_t i : net.weighted_layers()) {
    const LayerSpec& l = net.layers[i];
    if (l.plan) plans.emplace_back(build_plan(l.plan->r, l.plan->n));
    else plans.emplace_back(std::nullopt);
  }
  return plans;
}

void require_executable(const NetworkSpec& net) {
  for (const LayerSpec& l : net.layers) {
    const bool ok =
        (l.kind == LayerKind::conv && l.stride == 1 && l.pad == 0 && l.groups == 1 &&
         !l.side_branch) ||
        (l.kind == LayerKind::maxpool && l.stride == l.kernel && l.pad == 0) ||
        l.kind == LayerKind::relu || l.kind == LayerKind::flatten || l.kind == LayerKind::fc;
    if (!ok) {
      throw SpecError(net.name + ": layer " + l.name +
                      " cannot be executed (descriptor-only network?)");
    }
  }
}

LossGraph::LossGraph(const NetworkSpec& net) {
  require_executable(net);
  auto x = graph_.input("images");
  auto labels = graph_.input("labels");
  for (const LayerSpec& l : net.layers) {
    switch (l.kind) {
      case LayerKind::conv:
        params_.push_back(graph_.parameter(l.name, Tensor(l.weight_shape())));
        x = graph_.conv2d(x, params_.back());
        break;
      case LayerKind::fc:
        params_.push_back(graph_.parameter(l.name, Tensor(l.weight_shape())));
        x = graph_.linear(x, params_.back());
        break;
      case LayerKind::relu:
        x = graph_.relu(x);
        break;
      case LayerKind::maxpool:
        x = graph_.maxpool2d(x, l.kernel);
        break;
      case LayerKind::flatten:
        x = graph_.flatten(x);
        break;
      case LayerKind::avgpool:
        break;
    }
  }
  loss_ = graph_.softmax_cross_entropy(x, labels);
}

void LossGraph::load(const FilterBank& weights) {
  if (weights.count() != params_.size()) {
    throw ShapeError("LossGraph: " + std::to_string(weights.count()) +
                     " weight tensors for " + std::to_string(params_.size()) + " layers");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = graph_.parameter_value(params_[i]);
    if (p.shape() != weights.tensors[i].shape()) {
      throw ShapeError("LossGraph: weight " + std::to_string(i) + " has shape " +
                       shape_to_string(weights.tensors[i].shape()) + ", expected " +
                       shape_to_string(p.shape()));
    }
    p = weights.tensors[i];
  }
}

double LossGraph::loss(const FilterBank& weights, const Tensor& images, const Tensor& labels) {
  load(weights);
  return graph_.forward(loss_, {{"images", images}, {"labels", labels}})[0];
}

double LossGraph::loss_and_gradient(const FilterBank& weights, const Tensor& images,
                                    const Tensor& labels, FilterBank& grad) {
  const double e = loss(weights, images, labels);
  graph_.backward(loss_);
  grad.layers = weights.layers;
  grad.tensors.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) grad.tensors[i] = graph_.grad(params_[i]);
  return e;
}

Tensor sparse_linear(const Tensor& x, const Tensor& weights, std::uint64_t* macs) {
  const std::size_t outs = weights.dim(0), ins = weights.dim(1);
  if (x.rank() != 2 || x.dim(1) != ins) {
    throw ShapeError("fc: input " + shape_to_string(x.shape()) + " does not match weights " +
                     shape_to_string(weights.shape()));
  }
  const std::size_t batch = x.dim(0);
  Tensor out({batch, outs});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xs = x.data().data() + s * ins;
    for (std::size_t o = 0; o < outs; ++o) {
      const double* wr = weights.data().data() + o * ins;
      double acc = 0.0;
      for (std::size_t i = 0; i < ins; ++i) {
        if (wr[i] == 0.0) continue;
        acc += wr[i] * xs[i];
        if (macs) ++*macs;
      }
      out[s * outs + o] = acc;
    }
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t k) {
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.size() / (h * w);
  const std::size_t oh = h / k, ow = w / k;
  Shape s = x.shape();
  s[s.size() - 2] = oh;
  s[s.size() - 1] = ow;
  Tensor out(s);
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data().data() + p * h * w;
    for (std::size_t u = 0; u < oh; ++u) {
      for (std::size_t v = 0; v < ow; ++v, ++o) {
        double best = src[(u * k) * w + v * k];
        for (std::size_t a = 0; a < k; ++a)
          for (std::size_t b = 0; b < k; ++b) best = std::max(best, src[(u * k + a) * w + v * k + b]);
        out[o] = best;
      }
    }
  }
  return out;
}

void relu_inplace(Tensor& x) {
  for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
}

namespace {

Tensor run_network(const NetworkSpec& net, const FilterBank& weights, const WinogradBanks* banks,
                   const Tensor& batch, std::vector<std::uint64_t>* macs) {
  require_executable(net);
  if (banks && banks->size() != weights.count()) {
    throw std::invalid_argument("infer_winograd: " + std::to_string(banks->size()) +
                                " banks for " + std::to_string(weights.count()) + " layers");
  }
  if (macs) macs->assign(weights.count(), 0);
  Tensor x = batch;
  std::size_t wi = 0;
  for (const LayerSpec& l : net.layers) {
    switch (l.kind) {
      case LayerKind::conv: {
        const auto* bank = banks && (*banks)[wi] ? &*(*banks)[wi] : nullptr;
        if (bank) {
          SparseConvResult c = sparse_winograd_conv2d(x, *bank, bank->plan);
          if (macs) (*macs)[wi] = c.elementwise_macs;
          x = std::move(c.output);
        } else {
          CountedConv c = sparse_conv2d(x, weights.tensors.at(wi));
          if (macs) (*macs)[wi] = c.macs;
          x = std::move(c.output);
        }
        ++wi;
        break;
      }
      case LayerKind::fc: {
        std::uint64_t count = 0;
        x = sparse_linear(x, weights.tensors.at(wi), &count);
        if (macs) (*macs)[wi] = count;
        ++wi;
        break;
      }
      case LayerKind::relu:
        relu_inplace(x);
        break;
      case LayerKind::maxpool:
        x = maxpool2d(x, l.kernel);
        break;
      case LayerKind::flatten:
        x = x.reshaped({x.dim(0), x.size() / x.dim(0)});
        break;
      case LayerKind::avgpool:
        break;
    }
  }
  return x;
}

}  // namespace

Tensor infer_spatial(const NetworkSpec& net, const FilterBank& weights, const Tensor& batch,
                     std::vector<std::uint64_t>* macs) {
  return run_network(net, weights, nullptr, batch, macs);
}

Tensor infer_winograd(const NetworkSpec& net, const FilterBank& weights,
                      const WinogradBanks& banks, const Tensor& batch,
                      std::vector<std::uint64_t>* macs) {
  return run_network(net, weights, &banks, batch, macs);
}

Accuracy accuracy(const Tensor& logits, const Tensor& labels) {
  if (logits.rank() != 2 || labels.rank() != 1 || labels.dim(0) != logits.dim(0)) {
    throw ShapeError("accuracy: logits " + shape_to_string(logits.shape()) +
                     " do not match labels " + shape_to_string(labels.shape()));
  }
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const double* row = logits.data().data() + s * k;
    const auto truth = static_cast<std::size_t>(labels[s]);
    std::size_t rank = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (row[c] > row[truth] || (row[c] == row[truth] && c < truth)) ++rank;
    }
    hit1 += rank < 1 ? 1 : 0;
    hit5 += rank < 5 ? 1 : 0;
  }
  Accuracy a;
  a.samples = n;
  a.top1_hits = hit1;
  a.top5_hits = hit5;
  if (n > 0) {
    a.top1 = static_cast<double>(hit1) / static_cast<double>(n);
    a.top5 = static_cast<double>(hit5) / static_cast<double>(n);
  }
  return a;
}

}  // namespace unisparse
