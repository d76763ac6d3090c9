#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unisparse/model.hpp"
#include "unisparse/sparsity.hpp"
#include "unisparse/winograd.hpp"

namespace unisparse {

/// Transforms every planned layer; nothing is pruned.
WinogradBanks to_winograd_banks(const FilterBank& weights, const PlanSet& plans);

/// Zero positions chosen by magnitude pruning. layers[l] indexes the spatial
/// tensor of entry l (spatial domain) or its Winograd-domain tensor
/// (winograd domain, empty for unplanned layers).
struct PruneMask {
  Domain domain = Domain::spatial;
  std::vector<std::vector<std::uint8_t>> layers;
  std::size_t pruned = 0;
  std::size_t total = 0;
  /// One threshold for global scope, one per participating layer otherwise.
  std::vector<double> thresholds;

  double achieved() const {
    return total == 0 ? 0.0 : static_cast<double>(pruned) / static_cast<double>(total);
  }
};

struct PruneResult {
  /// Spatial weights: pruned for the spatial domain, untouched otherwise.
  FilterBank spatial;
  /// Pruned Winograd-domain banks; only filled for the winograd domain.
  WinogradBanks winograd;
  PruneMask mask;
};

/// Zeros every weight whose magnitude is <= the nearest-rank s-th
/// percentile, in the spatial domain over all weighted layers.
PruneResult prune_spatial(const FilterBank& weights, double s,
                          ThresholdScope scope = ThresholdScope::global);

/// Transforms the planned layers and prunes their Winograd-domain weights.
/// Throws if no layer has a plan.
PruneResult prune_winograd(const FilterBank& weights, const PlanSet& plans, double s,
                           ThresholdScope scope = ThresholdScope::global);

/// Prunes already transformed banks in place; returns the mask.
PruneMask prune_banks(WinogradBanks& banks, double s,
                      ThresholdScope scope = ThresholdScope::global);

PruneResult prune(const FilterBank& weights, const PlanSet& plans, Domain domain, double s,
                  ThresholdScope scope = ThresholdScope::global);

struct LayerSparsity {
  std::string name;
  std::string domain;
  std::size_t zeros = 0;
  std::size_t total = 0;
  double ratio() const {
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
  }
};

/// Exact zero counts per layer and overall. For Winograd banks, unplanned
/// layers are reported from their spatial weights.
struct SparsityReport {
  std::vector<LayerSparsity> layers;
  LayerSparsity overall;
  /// Target sparsity in percent, reported next to the realized ratio.
  double target = 0.0;

  std::string to_csv() const;
};

SparsityReport sparsity_report(const NetworkSpec& net, const FilterBank& weights,
                               double target = 0.0);
SparsityReport sparsity_report(const NetworkSpec& net, const FilterBank& weights,
                               const WinogradBanks& banks, double target = 0.0);

/// Zero pattern of one layer as text: one block per (d, c) filter, '#' for
/// nonzero and '.' for zero, blocks of a row separated by a space.
std::string pattern_dump(const Tensor& filters, std::size_t max_out = 8, std::size_t max_in = 8);

}  // namespace unisparse
