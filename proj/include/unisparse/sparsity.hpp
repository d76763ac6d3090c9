#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "unisparse/model.hpp"

namespace unisparse {

enum class ThresholdScope { global, per_layer };

const char* to_string(ThresholdScope scope);
ThresholdScope parse_scope(const std::string& s);

/// Target sparsities are percentages in [0, 100]; alpha > 0.
struct SparsityConfig {
  double s_wd = 0.0;
  double s_sd = 0.0;
  double alpha = 1.0;
  ThresholdScope scope = ThresholdScope::global;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

/// Nearest-rank percentile of the values: the element at sorted index
/// ceil(s*N/100)-1. Returns -infinity for s == 0 so that no value is
/// selected by a <= comparison.
double percentile_threshold(std::span<const double> magnitudes, double s);

struct RegularizerValue {
  double value = 0.0;
  FilterBank gradient;
  /// One entry for global scope, one per regularized layer otherwise.
  std::vector<double> thresholds;
  /// Number of weights the regularizer is normalized by.
  std::size_t population = 0;
  /// Number of weights at or below their threshold.
  std::size_t regularized = 0;
};

/// Mean over all Winograd-domain weights of the squared magnitudes at or
/// below the s-th percentile. Only layers with a plan contribute; the
/// gradient of other layers is zero. The indicator is held constant when
/// differentiating.
RegularizerValue winograd_partial_l2(const FilterBank& weights, const PlanSet& plans, double s,
                                     ThresholdScope scope = ThresholdScope::global);

/// Same in the spatial domain over every weighted layer.
RegularizerValue spatial_partial_l2(const FilterBank& weights, double s,
                                    ThresholdScope scope = ThresholdScope::global);

/// Magnitudes of the Winograd-domain weights of every planned layer, in
/// layer order.
std::vector<double> winograd_magnitudes(const FilterBank& weights, const PlanSet& plans);

struct JointCost {
  double cost = 0.0;
  double d_zeta_wd = 0.0;
  double d_zeta_sd = 0.0;
};

/// C = E + e^zeta_wd R_wd + e^zeta_sd R_sd - alpha (zeta_wd + zeta_sd).
JointCost joint_cost(double e, double r_wd, double r_sd, double zeta_wd, double zeta_sd,
                     double alpha);

}  // namespace unisparse
