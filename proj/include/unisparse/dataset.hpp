#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "unisparse/tensor.hpp"

namespace unisparse {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel u8 images with class labels. Pixels are normalized on the
/// way out with the owning handle's mean and stddev.
struct Dataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t classes = 0;
  std::vector<std::uint8_t> pixels;  // N*H*W, row-major
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct DatasetHandle {
  std::string source;
  Dataset train;
  Dataset test;
  double mean = 0.0;
  double stddev = 1.0;

  /// Normalized images [N,1,H,W] and labels [N] for the given sample indices.
  Tensor images(const Dataset& set, std::span<const std::size_t> indices) const;
  Tensor labels(const Dataset& set, std::span<const std::size_t> indices) const;
  Tensor all_images(const Dataset& set) const;
  Tensor all_labels(const Dataset& set) const;
};

struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t samples = 1000;
  std::size_t side = 16;
  std::uint64_t seed = 7;
};

/// Parses "synthetic:<classes>x<samples>x<side>[:seed=<n>]".
SyntheticSpec parse_synthetic_spec(const std::string& spec);

/// Seed-deterministic oriented gratings. Class c fixes an orientation and a
/// spatial frequency; phase, contrast and pixel noise are random per sample.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Reads an IDX image file (magic 0x00000803, dims N,H,W) and an IDX label
/// file (magic 0x00000801, dim N). Errors carry the byte offset.
Dataset read_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path);

/// Loads "synthetic:..." or "<images.idx>,<labels.idx>", splits 80/20 into
/// train/test (first 80% train after a seeded shuffle for synthetic data,
/// file order for IDX) and derives normalization from the train split.
DatasetHandle ingest_dataset(const std::string& source);

/// Splits and normalizes an already loaded dataset.
DatasetHandle make_handle(Dataset all, std::string source);

}  // namespace unisparse
