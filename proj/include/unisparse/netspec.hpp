#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "unisparse/tensor.hpp"

namespace unisparse {

enum class LayerKind { conv, maxpool, avgpool, fc, relu, flatten };

const char* to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& s);

struct WinogradAssignment {
  int r = 0;
  int n = 0;
  friend bool operator==(const WinogradAssignment&, const WinogradAssignment&) = default;
};

/// One layer of a network descriptor. Input extents are filled in by
/// NetworkSpec::finalize() for layers on the main chain; side-branch layers
/// (residual shortcuts) carry their own input extents and do not advance the
/// chain.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;

  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;

  // conv and pooling (avgpool is global: it reduces H×W to 1×1)
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
  std::optional<WinogradAssignment> plan;
  bool side_branch = false;

  // fc
  std::size_t in_features = 0;
  std::size_t out_features = 0;

  bool winograd_eligible() const {
    return kind == LayerKind::conv && stride == 1 && kernel >= 2;
  }
  bool has_weights() const { return kind == LayerKind::conv || kind == LayerKind::fc; }
  std::size_t out_h() const;
  std::size_t out_w() const;
  std::size_t out_c() const;
  /// [D, C/groups, r, r] for conv, [out, in] for fc, empty otherwise.
  Shape weight_shape() const;
  std::size_t weight_count() const;
};

struct NetworkSpec {
  std::string name;
  std::size_t input_channels = 0;
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  std::vector<LayerSpec> layers;

  /// Derives chained input extents and checks every invariant: shapes chain,
  /// plans exist exactly where a layer is Winograd-eligible and match its
  /// kernel, and fc widths agree with the flattened activation.
  void finalize();

  /// Indices of layers with weights, in order. A FilterBank holds one tensor
  /// per entry.
  std::vector<std::size_t> weighted_layers() const;
  bool has_winograd_layers() const;
  std::size_t num_classes() const;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Small trainable CNN: conv3x3(8) relu pool2 conv3x3(16) relu pool2 fc.
NetworkSpec tiny_cnn(std::size_t side = 28, std::size_t classes = 10);
/// ResNet-18 with each stride-2 3x3 convolution replaced by a stride-1
/// convolution followed by 2x2 max pooling. Descriptor only.
NetworkSpec resnet18_modified();
/// AlexNet (grouped, 227x227 input). Descriptor only.
NetworkSpec alexnet();
/// tiny-cnn, resnet18-modified, alexnet.
std::map<std::string, NetworkSpec> builtin_networks();
NetworkSpec builtin_network(const std::string& name);

nlohmann::json to_json(const NetworkSpec& net);
NetworkSpec network_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- MACs

/// An exact fraction of zero weights, zeros / total.
struct Fraction {
  std::uint64_t zeros = 0;
  std::uint64_t total = 1;
  double value() const { return static_cast<double>(zeros) / static_cast<double>(total); }
  /// Fraction with a 1e6 denominator, for user-supplied percentages.
  static Fraction from_double(double f);
};

/// Zero fraction per layer index; absent layers count as dense.
using SparsityMap = std::map<std::size_t, Fraction>;

enum class MacDomain { spatial, winograd, both };
/// elementwise_only: Winograd transforms are free. full: input and output
/// transforms are charged as dense matrix products per tile; filter
/// transforms are offline and free.
enum class CountingPolicy { elementwise_only, full };

const char* to_string(CountingPolicy policy);
CountingPolicy parse_policy(const std::string& s);
MacDomain parse_mac_domain(const std::string& s);

struct SparsityProfile {
  SparsityMap spatial;
  /// Applies to Winograd-executed layers; layers that run spatially in a
  /// Winograd deployment (fc, strided conv) use the spatial map.
  SparsityMap winograd;
};

struct LayerMacs {
  std::string name;
  bool winograd_executed = false;
  std::uint64_t spatial_dense = 0;
  std::uint64_t spatial_sparse = 0;
  std::uint64_t winograd_elementwise_dense = 0;
  std::uint64_t winograd_elementwise_sparse = 0;
  std::uint64_t winograd_transform = 0;

  std::uint64_t winograd_dense() const { return winograd_elementwise_dense + winograd_transform; }
  std::uint64_t winograd_sparse() const { return winograd_elementwise_sparse + winograd_transform; }
};

struct MacReport {
  std::string network;
  CountingPolicy policy = CountingPolicy::elementwise_only;
  bool spatial = false;
  bool winograd = false;
  std::vector<LayerMacs> layers;

  std::uint64_t total_spatial_dense() const;
  std::uint64_t total_spatial_sparse() const;
  std::uint64_t total_winograd_dense() const;
  std::uint64_t total_winograd_sparse() const;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Per-image MACs. Spatial conv: H_out·W_out·D·(C/g)·r²·(1-s); Winograd conv:
/// tiles·(C/g)·D·n²·(1-s) plus transforms per the policy; fc: in·out·(1-s).
/// Sparse counts are computed in integers as dense·(total-zeros)/total.
MacReport count_macs(const NetworkSpec& net, MacDomain domain,
                     const SparsityProfile& sparsity = {},
                     CountingPolicy policy = CountingPolicy::elementwise_only);

}  // namespace unisparse
