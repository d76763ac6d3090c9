#include "unisparse/netspec.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "unisparse/winograd.hpp"

namespace unisparse {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::fc: return "fc";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::conv, LayerKind::maxpool, LayerKind::avgpool,
                      LayerKind::fc, LayerKind::relu, LayerKind::flatten}) {
    if (s == to_string(k)) return k;
  }
  throw SpecError("unknown layer kind '" + s + "'");
}

std::size_t LayerSpec::out_h() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::maxpool:
      return (in_h + 2 * pad - kernel) / stride + 1;
    case LayerKind::avgpool:
      return 1;
    case LayerKind::relu:
      return in_h;
    default:
      return 0;
  }
}

std::size_t LayerSpec::out_w() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::maxpool:
      return (in_w + 2 * pad - kernel) / stride + 1;
    case LayerKind::avgpool:
      return 1;
    case LayerKind::relu:
      return in_w;
    default:
      return 0;
  }
}

std::size_t LayerSpec::out_c() const {
  return kind == LayerKind::conv ? out_channels : in_channels;
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::conv) return {out_channels, in_channels / groups, kernel, kernel};
  if (kind == LayerKind::fc) return {out_features, in_features};
  return {};
}

std::size_t LayerSpec::weight_count() const {
  return has_weights() ? shape_size(weight_shape()) : 0;
}

namespace {

std::string where(const NetworkSpec& net, std::size_t i) {
  const LayerSpec& l = net.layers[i];
  return net.name + " layer " + std::to_string(i) +
         (l.name.empty() ? "" : " (" + l.name + ")") + ": ";
}

}  // namespace

void NetworkSpec::finalize() {
  if (layers.empty()) throw SpecError(name + ": network has no layers");
  if (input_channels == 0 || input_h == 0 || input_w == 0) {
    throw SpecError(name + ": input extents must be positive");
  }
  std::size_t c = input_channels, h = input_h, w = input_w;
  std::size_t features = 0;
  bool flat = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = layers[i];
    if (l.name.empty()) l.name = std::string(to_string(l.kind)) + std::to_string(i);
    if (l.side_branch) {
      if (l.kind != LayerKind::conv) throw SpecError(where(*this, i) + "only conv layers may branch");
      if (l.in_channels == 0 || l.in_h == 0 || l.in_w == 0) {
        throw SpecError(where(*this, i) + "side branch needs explicit input extents");
      }
    } else if (l.kind == LayerKind::fc) {
      const std::size_t width = flat ? features : c * h * w;
      if (!flat) throw SpecError(where(*this, i) + "fc must follow flatten");
      if (l.in_features == 0) l.in_features = width;
      if (l.in_features != width) {
        throw SpecError(where(*this, i) + "fc expects " + std::to_string(l.in_features) +
                        " inputs, chain provides " + std::to_string(width));
      }
    } else if (flat && l.kind != LayerKind::relu) {
      throw SpecError(where(*this, i) + std::string(to_string(l.kind)) +
                      " after flatten");
    } else {
      l.in_channels = c;
      l.in_h = h;
      l.in_w = w;
    }

    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::maxpool: {
        if (l.kernel == 0 || l.stride == 0) {
          throw SpecError(where(*this, i) + "kernel and stride must be positive");
        }
        if (l.kernel > l.in_h + 2 * l.pad || l.kernel > l.in_w + 2 * l.pad) {
          throw SpecError(where(*this, i) + "kernel " + std::to_string(l.kernel) +
                          " exceeds padded input " + std::to_string(l.in_h) + "x" +
                          std::to_string(l.in_w));
        }
        if (l.kind == LayerKind::conv) {
          if (l.out_channels == 0 || l.groups == 0 || l.in_channels % l.groups ||
              l.out_channels % l.groups) {
            throw SpecError(where(*this, i) + "channels must be positive multiples of groups");
          }
          if (l.winograd_eligible() && !l.plan) {
            throw SpecError(where(*this, i) + "Winograd-eligible conv lacks a plan");
          }
          if (!l.winograd_eligible() && l.plan) {
            throw SpecError(where(*this, i) + "plan assigned to a layer that cannot use Winograd");
          }
          if (l.plan && (static_cast<std::size_t>(l.plan->r) != l.kernel ||
                         l.plan->n < l.plan->r || l.plan->n > 8)) {
            throw SpecError(where(*this, i) + "plan (" + std::to_string(l.plan->r) + "," +
                            std::to_string(l.plan->n) + ") does not fit kernel " +
                            std::to_string(l.kernel));
          }
        }
        if (!l.side_branch) {
          c = l.out_c();
          h = l.out_h();
          w = l.out_w();
        }
        break;
      }
      case LayerKind::avgpool:
        h = w = 1;
        break;
      case LayerKind::relu:
        break;
      case LayerKind::flatten:
        features = c * h * w;
        flat = true;
        break;
      case LayerKind::fc:
        if (l.out_features == 0) throw SpecError(where(*this, i) + "fc needs out_features");
        features = l.out_features;
        break;
    }
  }
}

std::vector<std::size_t> NetworkSpec::weighted_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_weights()) out.push_back(i);
  }
  return out;
}

bool NetworkSpec::has_winograd_layers() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const LayerSpec& l) { return l.plan.has_value(); });
}

std::size_t NetworkSpec::num_classes() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kind == LayerKind::fc) return it->out_features;
  }
  return 0;
}

namespace {

LayerSpec conv(std::string name, std::size_t out, std::size_t k, std::size_t stride = 1,
               std::size_t pad = 0, std::size_t groups = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv;
  l.out_channels = out;
  l.kernel = k;
  l.stride = stride;
  l.pad = pad;
  l.groups = groups;
  if (stride == 1 && k == 3) l.plan = WinogradAssignment{3, 4};
  if (stride == 1 && k == 5) l.plan = WinogradAssignment{5, 8};
  return l;
}

LayerSpec pool(std::string name, std::size_t k, std::size_t stride, std::size_t pad = 0) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::maxpool;
  l.kernel = k;
  l.stride = stride;
  l.pad = pad;
  return l;
}

LayerSpec simple(LayerKind kind, std::string name = {}) {
  LayerSpec l;
  l.kind = kind;
  l.name = std::move(name);
  return l;
}

LayerSpec fc(std::string name, std::size_t out) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::fc;
  l.out_features = out;
  return l;
}

}  // namespace

NetworkSpec tiny_cnn(std::size_t side, std::size_t classes) {
  NetworkSpec net;
  net.name = "tiny-cnn";
  net.input_channels = 1;
  net.input_h = net.input_w = side;
  net.layers = {conv("conv1", 8, 3),  simple(LayerKind::relu), pool("pool1", 2, 2),
                conv("conv2", 16, 3), simple(LayerKind::relu), pool("pool2", 2, 2),
                simple(LayerKind::flatten), fc("fc", classes)};
  net.finalize();
  return net;
}

NetworkSpec resnet18_modified() {
  NetworkSpec net;
  net.name = "resnet18-modified";
  net.input_channels = 3;
  net.input_h = net.input_w = 224;
  auto& L = net.layers;
  // The 7x7 stem keeps its stride; it is not Winograd-eligible either way.
  L.push_back(conv("conv1", 64, 7, 2, 3));
  L.push_back(simple(LayerKind::relu));
  L.push_back(pool("pool1", 3, 2, 1));
  std::size_t channels = 64, side = 56;
  const std::size_t widths[] = {64, 128, 256, 512};
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::size_t width = widths[stage];
    for (std::size_t block = 0; block < 2; ++block) {
      const std::string prefix =
          "layer" + std::to_string(stage + 1) + "." + std::to_string(block) + ".";
      const bool downsample = stage > 0 && block == 0;
      const std::size_t in_channels = channels, in_side = side;
      L.push_back(conv(prefix + "conv1", width, 3, 1, 1));
      if (downsample) {
        // Conv+Maxpool in place of the stride-2 convolution.
        L.push_back(pool(prefix + "pool", 2, 2));
        side /= 2;
      }
      L.push_back(simple(LayerKind::relu));
      L.push_back(conv(prefix + "conv2", width, 3, 1, 1));
      if (downsample) {
        // 1x1 projection shortcut, left at stride 2.
        LayerSpec sc = conv(prefix + "downsample", width, 1, 2);
        sc.side_branch = true;
        sc.in_channels = in_channels;
        sc.in_h = sc.in_w = in_side;
        L.push_back(sc);
      }
      L.push_back(simple(LayerKind::relu));
      channels = width;
    }
  }
  L.push_back(simple(LayerKind::avgpool, "avgpool"));
  L.push_back(simple(LayerKind::flatten));
  L.push_back(fc("fc", 1000));
  net.finalize();
  return net;
}

NetworkSpec alexnet() {
  NetworkSpec net;
  net.name = "alexnet";
  net.input_channels = 3;
  net.input_h = net.input_w = 227;
  net.layers = {conv("conv1", 96, 11, 4),
                simple(LayerKind::relu),
                pool("pool1", 3, 2),
                conv("conv2", 256, 5, 1, 2, 2),
                simple(LayerKind::relu),
                pool("pool2", 3, 2),
                conv("conv3", 384, 3, 1, 1),
                simple(LayerKind::relu),
                conv("conv4", 384, 3, 1, 1, 2),
                simple(LayerKind::relu),
                conv("conv5", 256, 3, 1, 1, 2),
                simple(LayerKind::relu),
                pool("pool5", 3, 2),
                simple(LayerKind::flatten),
                fc("fc6", 4096),
                simple(LayerKind::relu),
                fc("fc7", 4096),
                simple(LayerKind::relu),
                fc("fc8", 1000)};
  net.finalize();
  return net;
}

std::map<std::string, NetworkSpec> builtin_networks() {
  return {{"tiny-cnn", tiny_cnn()},
          {"resnet18-modified", resnet18_modified()},
          {"alexnet", alexnet()}};
}

NetworkSpec builtin_network(const std::string& name) {
  auto nets = builtin_networks();
  auto it = nets.find(name);
  if (it == nets.end()) throw SpecError("unknown network '" + name + "'");
  return it->second;
}

nlohmann::json to_json(const NetworkSpec& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : net.layers) {
    nlohmann::json j{{"name", l.name}, {"kind", to_string(l.kind)}};
    switch (l.kind) {
      case LayerKind::conv:
        j["out_channels"] = l.out_channels;
        j["groups"] = l.groups;
        [[fallthrough]];
      case LayerKind::maxpool:
        j["kernel"] = l.kernel;
        j["stride"] = l.stride;
        j["pad"] = l.pad;
        break;
      case LayerKind::fc:
        j["in_features"] = l.in_features;
        j["out_features"] = l.out_features;
        break;
      default:
        break;
    }
    if (l.plan) j["winograd"] = {{"r", l.plan->r}, {"n", l.plan->n}};
    if (l.side_branch) {
      j["side_branch"] = true;
      j["input"] = {l.in_channels, l.in_h, l.in_w};
    }
    layers.push_back(std::move(j));
  }
  return {{"name", net.name},
          {"input", {net.input_channels, net.input_h, net.input_w}},
          {"layers", std::move(layers)}};
}

NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec net;
    net.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    if (!in.is_array() || in.size() != 3) throw SpecError("input must be [C,H,W]");
    net.input_channels = in[0].get<std::size_t>();
    net.input_h = in[1].get<std::size_t>();
    net.input_w = in[2].get<std::size_t>();
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.name = jl.value("name", "");
      l.kind = parse_layer_kind(jl.at("kind").get<std::string>());
      l.out_channels = jl.value("out_channels", std::size_t{0});
      l.groups = jl.value("groups", std::size_t{1});
      l.kernel = jl.value("kernel", std::size_t{0});
      l.stride = jl.value("stride", std::size_t{1});
      l.pad = jl.value("pad", std::size_t{0});
      l.in_features = jl.value("in_features", std::size_t{0});
      l.out_features = jl.value("out_features", std::size_t{0});
      if (jl.contains("winograd")) {
        l.plan = WinogradAssignment{jl["winograd"].at("r").get<int>(),
                                    jl["winograd"].at("n").get<int>()};
      }
      l.side_branch = jl.value("side_branch", false);
      if (l.side_branch) {
        const auto& sin = jl.at("input");
        l.in_channels = sin.at(0).get<std::size_t>();
        l.in_h = sin.at(1).get<std::size_t>();
        l.in_w = sin.at(2).get<std::size_t>();
      }
      net.layers.push_back(std::move(l));
    }
    net.finalize();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("network JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- MACs

Fraction Fraction::from_double(double f) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw std::invalid_argument("sparsity fraction " + std::to_string(f) +
                                " outside [0,1]");
  }
  return Fraction{static_cast<std::uint64_t>(std::llround(f * 1e6)), 1000000};
}

const char* to_string(CountingPolicy policy) {
  return policy == CountingPolicy::full ? "full" : "elementwise-only";
}

CountingPolicy parse_policy(const std::string& s) {
  if (s == "elementwise-only" || s == "elementwise") return CountingPolicy::elementwise_only;
  if (s == "full") return CountingPolicy::full;
  throw std::invalid_argument("unknown counting policy '" + s + "'");
}

MacDomain parse_mac_domain(const std::string& s) {
  if (s == "spatial") return MacDomain::spatial;
  if (s == "winograd") return MacDomain::winograd;
  if (s == "both") return MacDomain::both;
  throw std::invalid_argument("unknown domain '" + s + "'");
}

namespace {

std::uint64_t keep(std::uint64_t dense, const SparsityMap& map, std::size_t layer) {
  auto it = map.find(layer);
  if (it == map.end()) return dense;
  const Fraction f = it->second;
  if (f.total == 0 || f.zeros > f.total) {
    throw std::invalid_argument("sparsity for layer " + std::to_string(layer) +
                                " outside [0,1]");
  }
  const auto kept = static_cast<unsigned __int128>(dense) * (f.total - f.zeros);
  return static_cast<std::uint64_t>(kept / f.total);
}

}  // namespace

MacReport count_macs(const NetworkSpec& net, MacDomain domain,
                     const SparsityProfile& sparsity, CountingPolicy policy) {
  MacReport report;
  report.network = net.name;
  report.policy = policy;
  report.spatial = domain != MacDomain::winograd;
  report.winograd = domain != MacDomain::spatial;
  if (report.winograd && !net.has_winograd_layers()) {
    throw std::invalid_argument(net.name + ": Winograd MACs requested but no layer has a plan");
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (!l.has_weights()) continue;
    LayerMacs m;
    m.name = l.name;
    std::uint64_t dense = 0;
    if (l.kind == LayerKind::conv) {
      dense = static_cast<std::uint64_t>(l.out_h()) * l.out_w() * l.weight_count();
    } else {
      dense = static_cast<std::uint64_t>(l.in_features) * l.out_features;
    }
    const std::uint64_t sparse = keep(dense, sparsity.spatial, i);
    if (report.spatial) {
      m.spatial_dense = dense;
      m.spatial_sparse = sparse;
    }
    if (report.winograd) {
      if (l.plan) {
        const auto n = static_cast<std::uint64_t>(l.plan->n);
        const std::uint64_t mm = n - static_cast<std::uint64_t>(l.plan->r) + 1;
        const std::uint64_t tiles = ((l.out_h() + mm - 1) / mm) * ((l.out_w() + mm - 1) / mm);
        const std::uint64_t per_tile = static_cast<std::uint64_t>(l.in_channels / l.groups) *
                                       l.out_channels * n * n;
        m.winograd_executed = true;
        m.winograd_elementwise_dense = tiles * per_tile;
        m.winograd_elementwise_sparse = keep(tiles * per_tile, sparsity.winograd, i);
        if (policy == CountingPolicy::full) {
          // F x Fᵀ: 2n³ per input channel; Sᵀ M S: m·n² + m²·n per output channel.
          m.winograd_transform =
              tiles * (l.in_channels * 2 * n * n * n + l.out_channels * (mm * n * n + mm * mm * n));
        }
      } else {
        m.winograd_elementwise_dense = dense;
        m.winograd_elementwise_sparse = sparse;
      }
    }
    report.layers.push_back(std::move(m));
  }
  return report;
}

std::uint64_t MacReport::total_spatial_dense() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.spatial_dense;
  return s;
}
std::uint64_t MacReport::total_spatial_sparse() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.spatial_sparse;
  return s;
}
std::uint64_t MacReport::total_winograd_dense() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.winograd_dense();
  return s;
}
std::uint64_t MacReport::total_winograd_sparse() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.winograd_sparse();
  return s;
}

std::string MacReport::to_csv() const {
  std::ostringstream os;
  os << "layer,winograd_executed,spatial_dense,spatial_sparse,winograd_elementwise_dense,"
        "winograd_elementwise_sparse,winograd_transform,winograd_dense,winograd_sparse\n";
  for (const auto& l : layers) {
    os << l.name << ',' << (l.winograd_executed ? 1 : 0) << ',' << l.spatial_dense << ','
       << l.spatial_sparse << ',' << l.winograd_elementwise_dense << ','
       << l.winograd_elementwise_sparse << ',' << l.winograd_transform << ','
       << l.winograd_dense() << ',' << l.winograd_sparse() << '\n';
  }
  std::uint64_t ed = 0, es = 0, tr = 0;
  for (const auto& l : layers) {
    ed += l.winograd_elementwise_dense;
    es += l.winograd_elementwise_sparse;
    tr += l.winograd_transform;
  }
  os << "total,," << total_spatial_dense() << ',' << total_spatial_sparse() << ',' << ed << ','
     << es << ',' << tr << ',' << total_winograd_dense() << ',' << total_winograd_sparse()
     << '\n';
  return os.str();
}

std::string MacReport::to_text() const {
  auto mega = [](std::uint64_t v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << static_cast<double>(v) / 1e6 << "M";
    return s.str();
  };
  std::size_t width = 5;
  for (const auto& l : layers) width = std::max(width, l.name.size());
  std::ostringstream os;
  os << network << " (policy: " << unisparse::to_string(policy) << ")\n";
  os << std::left << std::setw(static_cast<int>(width)) << "layer" << std::right;
  if (spatial) os << std::setw(14) << "spatial" << std::setw(14) << "spatial-sp";
  if (winograd) os << std::setw(14) << "winograd" << std::setw(14) << "winograd-sp";
  os << '\n';
  auto row = [&](const std::string& name, std::uint64_t sd, std::uint64_t ss, std::uint64_t wd,
                 std::uint64_t ws) {
    os << std::left << std::setw(static_cast<int>(width)) << name << std::right;
    if (spatial) os << std::setw(14) << mega(sd) << std::setw(14) << mega(ss);
    if (winograd) os << std::setw(14) << mega(wd) << std::setw(14) << mega(ws);
    os << '\n';
  };
  for (const auto& l : layers) {
    row(l.name, l.spatial_dense, l.spatial_sparse, l.winograd_dense(), l.winograd_sparse());
  }
  row("total", total_spatial_dense(), total_spatial_sparse(), total_winograd_dense(),
      total_winograd_sparse());
  return os.str();
}

}  // namespace unisparse
