#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "unisparse/compression.hpp"
#include "unisparse/dataset.hpp"
#include "unisparse/model.hpp"
#include "unisparse/netspec.hpp"
#include "unisparse/pruning.hpp"

namespace unisparse {

/// A network ready for inference in one domain. Sparsity and MACs are
/// measured from the stored zeros.
struct DeployedModel {
  Domain domain = Domain::spatial;
  NetworkSpec net;
  /// Dither-cancelled spatial weights; in a Winograd deployment these serve
  /// the layers without a bank.
  FilterBank weights;
  /// Filled for a Winograd deployment only.
  WinogradBanks banks;
  SparsityReport sparsity;
  /// Measured zero fractions keyed by layer index, in the count_macs format.
  SparsityProfile profile;
  /// count_macs over the measured profile, element-wise policy.
  MacReport macs;
};

DeployedModel deploy_spatial(const NetworkSpec& net, const FilterBank& weights);
DeployedModel deploy_spatial(const CompressedModel& model);
DeployedModel deploy_spatial(std::span<const std::uint8_t> container);

/// Transforms every planned layer, prunes the Winograd-domain weights at the
/// nearest-rank s_wd percentile of the deployed magnitudes and keeps the
/// remaining layers spatial. Throws SpecError if no layer is eligible.
DeployedModel deploy_winograd(const NetworkSpec& net, const FilterBank& weights, double s_wd,
                              ThresholdScope scope = ThresholdScope::global);
DeployedModel deploy_winograd(const CompressedModel& model, double s_wd,
                              ThresholdScope scope = ThresholdScope::global);
DeployedModel deploy_winograd(std::span<const std::uint8_t> container, double s_wd,
                              ThresholdScope scope = ThresholdScope::global);

/// Logits for a batch; macs receives per-weighted-layer MACs for the batch.
Tensor run(const DeployedModel& model, const Tensor& batch,
           std::vector<std::uint64_t>* macs = nullptr);

struct Evaluation {
  Accuracy accuracy;
  /// Measured MACs per image for each weighted layer, from the kernels.
  std::vector<std::uint64_t> layer_macs;
  std::uint64_t total_macs = 0;
};

/// Scores the whole split in batches of batch_size.
Evaluation evaluate(const DeployedModel& model, const DatasetHandle& data, const Dataset& split,
                    std::size_t batch_size = 256);

/// domain,layer,zeros,total,sparsity,macs_per_image,top1,top5 with a final
/// "total" row.
std::string evaluation_csv(const DeployedModel& model, const Evaluation& eval);

}  // namespace unisparse
