#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unisparse/autograd.hpp"
#include "unisparse/netspec.hpp"
#include "unisparse/tensor.hpp"
#include "unisparse/winograd.hpp"

namespace unisparse {

/// All learnable weights of a network: one tensor per weighted layer, in the
/// order of NetworkSpec::weighted_layers(). Conv tensors are [D,C,r,r], fc
/// tensors [out,in]. The flattened view concatenates them in that order and
/// is what percentiles and quantization operate on.
struct FilterBank {
  std::vector<Tensor> tensors;
  std::vector<std::size_t> layers;

  std::size_t count() const { return tensors.size(); }
  /// N_SD: total number of spatial weights.
  std::size_t size() const;
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  std::size_t zero_count() const;

  friend bool operator==(const FilterBank&, const FilterBank&) = default;
};

enum class Domain { spatial, winograd };

const char* to_string(Domain domain);
/// Throws std::invalid_argument naming the accepted values.
Domain parse_domain(const std::string& s);

/// Zero tensors with the same layout.
FilterBank zeros_like(const FilterBank& bank);

/// He-normal initialization (std = sqrt(2 / fan_in)) from SplitMix64.
FilterBank init_filter_bank(const NetworkSpec& net, std::uint64_t seed);

/// Winograd-domain weights per FilterBank entry; empty for layers without a
/// plan, which keep running spatially.
using WinogradBanks = std::vector<std::optional<WinogradFilterBank>>;

/// Winograd plans aligned with a FilterBank; empty where a layer has none.
using PlanSet = std::vector<std::optional<WinogradPlan>>;
PlanSet plans_for(const NetworkSpec& net);

/// Throws SpecError unless every layer can be executed here: unit-stride
/// unpadded ungrouped conv, non-overlapping maxpool, relu, flatten, fc.
void require_executable(const NetworkSpec& net);

/// Autodiff graph of a network's minibatch cross-entropy.
class LossGraph {
 public:
  explicit LossGraph(const NetworkSpec& net);

  /// Mean cross-entropy over the batch at the given weights; fills grad with
  /// dE/dw in FilterBank layout.
  double loss_and_gradient(const FilterBank& weights, const Tensor& images,
                           const Tensor& labels, FilterBank& grad);
  double loss(const FilterBank& weights, const Tensor& images, const Tensor& labels);

 private:
  void load(const FilterBank& weights);

  Graph graph_;
  Graph::Var loss_;
  std::vector<Graph::Var> params_;
};

/// Logits [N,K] for a batch [N,C,H,W] with zero-skipping spatial kernels.
/// When macs is given it receives per-weighted-layer MACs per batch.
Tensor infer_spatial(const NetworkSpec& net, const FilterBank& weights, const Tensor& batch,
                     std::vector<std::uint64_t>* macs = nullptr);

/// As infer_spatial, but conv layers with a bank run as sparse Winograd
/// convolutions; macs then holds element-wise MACs for those layers.
Tensor infer_winograd(const NetworkSpec& net, const FilterBank& weights,
                      const WinogradBanks& banks, const Tensor& batch,
                      std::vector<std::uint64_t>* macs = nullptr);

/// Zero-skipping fully-connected layer on [N,I]; counts MACs performed.
Tensor sparse_linear(const Tensor& x, const Tensor& weights, std::uint64_t* macs);
/// k×k non-overlapping max pooling without gradient bookkeeping.
Tensor maxpool2d(const Tensor& x, std::size_t k);
void relu_inplace(Tensor& x);

struct Accuracy {
  double top1 = 0.0;
  double top5 = 0.0;
  std::size_t samples = 0;
  std::size_t top1_hits = 0;
  std::size_t top5_hits = 0;
};

/// Top-1 and top-5 of logits [N,K] against class indices [N]. A class ranks
/// ahead of the true class if its logit is larger, or equal with a lower
/// index.
Accuracy accuracy(const Tensor& logits, const Tensor& labels);

}  // namespace unisparse
