#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "unisparse/dataset.hpp"
#include "unisparse/model.hpp"
#include "unisparse/sparsity.hpp"

namespace unisparse {

struct TrainConfig {
  double learning_rate = 1e-3;
  /// Adam step size for zeta_wd and zeta_sd.
  double zeta_learning_rate = 1e-2;
  std::size_t batch_size = 32;
  std::size_t iterations = 20000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double zeta0 = std::log(1e-4);
  SparsityConfig sparsity;
  std::uint64_t seed = 1;
  /// Metrics row every log_every iterations (and at the last one); 0 logs
  /// only the last iteration.
  std::size_t log_every = 100;
  /// Test-set samples scored for the accuracy column; 0 means all.
  std::size_t eval_samples = 0;
  /// Histogram snapshot cadence; 0 disables snapshots.
  std::size_t histogram_every = 0;
  std::size_t histogram_bins = 41;
  /// FilterBank index whose weights are histogrammed.
  std::size_t histogram_layer = 1;

  void validate() const;
};

struct TrainState {
  double zeta_wd = 0.0;
  double zeta_sd = 0.0;
  /// -infinity while the corresponding target sparsity is 0.
  double theta_wd = -INFINITY;
  double theta_sd = -INFINITY;
  std::size_t iteration = 0;
};

struct MetricsRow {
  std::size_t iteration = 0;
  double e = 0.0;
  double r_wd = 0.0;
  double r_sd = 0.0;
  double zeta_wd = 0.0;
  double zeta_sd = 0.0;
  double theta_wd = 0.0;
  double theta_sd = 0.0;
  double accuracy = 0.0;
};

/// iteration,E,R_WD,R_SD,zeta_WD,zeta_SD,theta_WD,theta_SD,accuracy with
/// values printed to 17 significant digits.
std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Signed histogram over [-M, M] where M is the largest magnitude (M = 1
/// when all values are zero). The last bin is closed on the right.
struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;

  std::size_t total() const;
  std::size_t bin_of(double v) const;
};

Histogram histogram(std::span<const double> values, std::size_t bins);

/// Histogram of one layer's spatial weights or Winograd-domain weights.
Histogram snapshot_histogram(const FilterBank& weights, const PlanSet& plans,
                             std::size_t layer, Domain domain, std::size_t bins);

struct HistogramSnapshot {
  std::size_t iteration = 0;
  Domain domain = Domain::spatial;
  std::size_t layer = 0;
  Histogram histogram;
};

/// One row per bin: iteration,domain,layer,bin_lo,bin_hi,count.
std::string histograms_csv(const std::vector<HistogramSnapshot>& snaps);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  FilterBank weights;
  TrainState state;
  std::vector<MetricsRow> metrics;
  std::vector<HistogramSnapshot> histograms;
};

/// Adam on the weights and on (zeta_wd, zeta_sd) under
///   C = E + e^zeta_wd R_wd + e^zeta_sd R_sd - alpha (zeta_wd + zeta_sd).
/// Thresholds are recomputed from the current weights every iteration.
/// Starts from init_filter_bank(net, seed) unless initial is given.
/// Throws TrainingDiverged if E becomes non-finite.
TrainResult train(const NetworkSpec& net, const DatasetHandle& data, const TrainConfig& config,
                  const std::optional<FilterBank>& initial = std::nullopt);

/// Adam moments for a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t size, double beta1, double beta2, double epsilon);
  /// One bias-corrected step; t counts from 1 on the first call.
  void step(std::span<double> params, std::span<const double> grad, double lr);

 private:
  double beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace unisparse
