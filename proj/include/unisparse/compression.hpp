#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "unisparse/dataset.hpp"
#include "unisparse/model.hpp"
#include "unisparse/netspec.hpp"

namespace unisparse {

/// U_i = delta * (u_i - 1/2) with u_i the i-th SplitMix64 uniform in (0, 1)
/// drawn from seed.
std::vector<double> dither_sequence(std::size_t count, double delta, std::uint64_t seed);

/// CRC-32 of the first (up to) 64 dither values as little-endian f64. Lets a
/// reader detect a seed that does not belong to the levels.
std::uint32_t dither_fingerprint(std::size_t count, double delta, std::uint64_t seed);

/// Shared value per nonzero level, sorted by level.
struct Codebook {
  std::vector<std::pair<std::int64_t, double>> entries;

  /// Codebook with value delta * k for each distinct nonzero level k.
  static Codebook uniform(std::span<const std::int64_t> levels, double delta);
  double value(std::int64_t level) const;
  std::size_t index(std::int64_t level) const;
  friend bool operator==(const Codebook&, const Codebook&) = default;
};

/// Levels of a dithered uniform quantizer. Level 0 marks a pruned weight.
struct QuantizationRecord {
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> levels;
  Codebook codebook;
  bool fine_tuned = false;
  std::uint32_t fingerprint = 0;

  std::size_t size() const { return levels.size(); }
  std::size_t pruned_count() const;
  /// Percentage of pruned weights.
  double sparsity() const;
  /// q_i: codebook value of each level, 0 for pruned weights.
  std::vector<double> quantized() const;
  friend bool operator==(const QuantizationRecord&, const QuantizationRecord&) = default;
};

/// round((a + u) / delta), halves rounded away from zero.
std::int64_t quantize_level(double a, double u, double delta);

/// q_i = delta * round((a_i + U_i) / delta), rounding half away from zero.
QuantizationRecord dithered_quantize(std::span<const double> weights, double delta,
                                     std::uint64_t seed);

/// q̂_i = q_i - U_i for unpruned weights and exactly 0 for pruned ones.
/// Throws std::runtime_error if the seed does not match the fingerprint.
std::vector<double> dither_cancel(const QuantizationRecord& record);

/// Smallest delta (bisection on log delta, 60 steps) whose quantization
/// prunes at least target_percent of the weights.
double search_delta(std::span<const double> weights, double target_percent, std::uint64_t seed);

/// Moves each codebook value by -learning_rate times the mean of grad over
/// the weights carrying that level. Level 0 is skipped.
void descend_codebook(Codebook& codebook, std::span<const std::int64_t> levels,
                      std::span<const double> grad, double learning_rate);

struct FineTuneConfig {
  std::size_t steps = 200;
  /// Plain gradient-descent step on each level's shared value.
  double learning_rate = 1e-5;
  /// Plain gradient-descent step on zeta_wd.
  double zeta_learning_rate = 1e-5;
  std::size_t batch_size = 32;
  double s_wd = 70.0;
  double alpha = 1.0;
  double zeta_wd = 0.0;
  std::uint64_t seed = 1;
};

struct FineTuneResult {
  QuantizationRecord record;
  double zeta_wd = 0.0;
  /// C = E + e^zeta R_wd - alpha zeta per step.
  std::vector<double> cost;
};

/// Descends C = E + e^zeta_wd R_wd - alpha zeta_wd over the codebook values:
/// each nonzero level moves by -learning_rate times the mean gradient of its
/// member weights (taken at the dither-cancelled weights). Pruned weights
/// stay at zero and zeta_wd is updated alongside.
FineTuneResult fine_tune_codebook(const QuantizationRecord& record, const NetworkSpec& net,
                                  const DatasetHandle& data, const FineTuneConfig& config);

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Byte layout of the container; all integers little-endian.
namespace container {
inline constexpr char kMagic[8] = {'W', 'S', 'P', 'C', '0', '0', '0', '1'};
inline constexpr std::size_t kHeaderSize = 112;
inline constexpr std::uint32_t kFlagFineTuned = 1;
enum Section { spec = 0, bitmap = 1, levels = 2, codebook = 3, section_count = 4 };
}  // namespace container

struct CompressedModel {
  NetworkSpec net;
  QuantizationRecord record;
};

struct ContainerStats {
  std::size_t weights = 0;
  std::size_t dense_bytes = 0;
  std::size_t container_bytes = 0;
  /// Bitmap, level and codebook sections only.
  std::size_t payload_bytes = 0;
  std::size_t section_bytes[container::section_count] = {};

  double ratio() const;
  double payload_ratio() const;
};

std::vector<std::uint8_t> write_container(const CompressedModel& model);
/// Verifies magic, version, section bounds and CRC-32 before decoding.
CompressedModel read_container(std::span<const std::uint8_t> bytes);
ContainerStats container_stats(std::span<const std::uint8_t> bytes);

/// Quantizes the flattened weights and packages them with the network.
CompressedModel compress(const NetworkSpec& net, const FilterBank& weights, double delta,
                         std::uint64_t seed);
/// Dither-cancelled weights in FilterBank layout.
FilterBank reconstruct(const CompressedModel& model);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace unisparse
