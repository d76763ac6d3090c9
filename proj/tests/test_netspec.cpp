#include "doctest.h"
#include "unisparse/netspec.hpp"

using namespace unisparse;

namespace {

NetworkSpec single_conv() {
  NetworkSpec net;
  net.name = "single";
  net.input_channels = 1;
  net.input_h = net.input_w = 4;
  LayerSpec c;
  c.kind = LayerKind::conv;
  c.out_channels = 1;
  c.kernel = 3;
  c.plan = WinogradAssignment{3, 4};
  net.layers = {c};
  net.finalize();
  return net;
}

}  // namespace

TEST_CASE("builtin networks chain") {
  NetworkSpec tiny = tiny_cnn();
  CHECK(tiny.input_h == 28);
  CHECK(tiny.layers.back().in_features == 16 * 5 * 5);
  CHECK(tiny.num_classes() == 10);
  CHECK(tiny.weighted_layers().size() == 3);

  NetworkSpec resnet = resnet18_modified();
  std::size_t three_by_three = 0;
  for (const LayerSpec& l : resnet.layers) {
    if (l.kind == LayerKind::conv && l.kernel == 3) {
      ++three_by_three;
      CHECK(l.winograd_eligible());
      REQUIRE(l.plan);
      CHECK(*l.plan == WinogradAssignment{3, 4});
    }
  }
  CHECK(three_by_three == 16);
  CHECK(resnet.layers.back().in_features == 512);

  NetworkSpec alex = alexnet();
  bool found = false;
  for (const LayerSpec& l : alex.layers) {
    if (l.kind == LayerKind::conv && l.kernel == 5) {
      found = true;
      CHECK(*l.plan == WinogradAssignment{5, 8});
    }
    if (l.kind == LayerKind::conv && l.kernel == 11) CHECK(!l.plan);
  }
  CHECK(found);
  CHECK(builtin_networks().size() == 3);
  CHECK_THROWS_AS(builtin_network("vgg"), SpecError);
}

TEST_CASE("finalize rejects inconsistent descriptors") {
  NetworkSpec net = single_conv();
  net.layers[0].plan.reset();
  CHECK_THROWS_AS(net.finalize(), SpecError);

  net = single_conv();
  net.layers[0].plan = WinogradAssignment{5, 8};
  CHECK_THROWS_AS(net.finalize(), SpecError);

  net = single_conv();
  net.layers[0].kernel = 5;
  net.layers[0].plan = WinogradAssignment{5, 8};
  CHECK_THROWS_AS(net.finalize(), SpecError);

  net = single_conv();
  LayerSpec f;
  f.kind = LayerKind::fc;
  f.out_features = 3;
  net.layers.push_back(f);
  CHECK_THROWS_AS(net.finalize(), SpecError);  // fc without flatten

  NetworkSpec empty;
  empty.name = "empty";
  empty.input_channels = empty.input_h = empty.input_w = 1;
  CHECK_THROWS_AS(empty.finalize(), SpecError);
}

TEST_CASE("JSON round trip") {
  for (const auto& [name, net] : builtin_networks()) {
    CAPTURE(name);
    NetworkSpec back = network_from_json(to_json(net));
    CHECK(to_json(back) == to_json(net));
    CHECK(back.layers.size() == net.layers.size());
  }
  CHECK_THROWS_AS(network_from_json(nlohmann::json{{"name", "x"}}), SpecError);
}

TEST_CASE("MACs of a single 3x3 layer") {
  NetworkSpec net = single_conv();
  MacReport spatial = count_macs(net, MacDomain::spatial);
  CHECK(spatial.total_spatial_dense() == 36);
  MacReport wino = count_macs(net, MacDomain::winograd);
  CHECK(wino.total_winograd_dense() == 16);
  MacReport full = count_macs(net, MacDomain::winograd, {}, CountingPolicy::full);
  // F x Fᵀ: 2·4³, Sᵀ M S: 2·16 + 4·4.
  CHECK(full.total_winograd_dense() == 16 + 128 + 48);
}

TEST_CASE("MAC totals of the descriptor-only networks") {
  // Frozen from a standalone loop over the layer inventory.
  MacReport resnet = count_macs(resnet18_modified(), MacDomain::both);
  CHECK(resnet.total_spatial_dense() == 2334298112ULL);
  CHECK(resnet.total_winograd_dense() == 1161203712ULL);
  MacReport resnet_full =
      count_macs(resnet18_modified(), MacDomain::both, {}, CountingPolicy::full);
  CHECK(resnet_full.total_spatial_dense() == 2334298112ULL);
  CHECK(resnet_full.total_winograd_dense() == 1240391680ULL);

  MacReport alex = count_macs(alexnet(), MacDomain::both);
  CHECK(alex.total_spatial_dense() == 724406816ULL);
  CHECK(alex.total_winograd_dense() == 375980576ULL);

  MacReport tiny = count_macs(tiny_cnn(), MacDomain::both);
  CHECK(tiny.total_spatial_dense() == 192064);
  CHECK(tiny.total_winograd_dense() == 99360);
}

TEST_CASE("sparse MAC properties") {
  NetworkSpec net = tiny_cnn();
  const auto weighted = net.weighted_layers();
  SparsityProfile zero;
  for (std::size_t i : weighted) {
    zero.spatial[i] = Fraction{0, 10};
    zero.winograd[i] = Fraction{0, 10};
  }
  MacReport dense = count_macs(net, MacDomain::both);
  MacReport z = count_macs(net, MacDomain::both, zero);
  CHECK(z.total_spatial_sparse() == dense.total_spatial_dense());
  CHECK(z.total_winograd_sparse() == dense.total_winograd_dense());

  SparsityProfile one;
  for (std::size_t i : weighted) {
    one.spatial[i] = Fraction{7, 7};
    one.winograd[i] = Fraction{7, 7};
  }
  MacReport gone = count_macs(net, MacDomain::both, one);
  CHECK(gone.total_spatial_sparse() == 0);
  CHECK(gone.total_winograd_sparse() == 0);

  // Monotone in every layer's sparsity, and totals equal sums.
  std::uint64_t previous = dense.total_winograd_dense() + 1;
  for (int step = 0; step <= 10; ++step) {
    SparsityProfile p;
    for (std::size_t i : weighted) {
      p.spatial[i] = Fraction::from_double(step / 10.0);
      p.winograd[i] = Fraction::from_double(step / 10.0);
    }
    for (auto policy : {CountingPolicy::elementwise_only, CountingPolicy::full}) {
      MacReport r = count_macs(net, MacDomain::both, p, policy);
      std::uint64_t sum = 0;
      for (const auto& l : r.layers) {
        CHECK(l.spatial_sparse <= l.spatial_dense);
        CHECK(l.winograd_sparse() <= l.winograd_dense());
        sum += l.winograd_sparse();
      }
      CHECK(sum == r.total_winograd_sparse());
      if (policy == CountingPolicy::elementwise_only) {
        CHECK(r.total_winograd_sparse() < previous);
        previous = r.total_winograd_sparse();
      }
      // The policy never touches spatial counts.
      CHECK(r.total_spatial_sparse() ==
            count_macs(net, MacDomain::spatial, p).total_spatial_sparse());
    }
  }
  CHECK_THROWS_AS(Fraction::from_double(1.5), std::invalid_argument);
}

TEST_CASE("Winograd counting needs plans") {
  NetworkSpec net;
  net.name = "fc-only";
  net.input_channels = 1;
  net.input_h = net.input_w = 2;
  LayerSpec flat;
  flat.kind = LayerKind::flatten;
  LayerSpec f;
  f.kind = LayerKind::fc;
  f.out_features = 2;
  net.layers = {flat, f};
  net.finalize();
  CHECK(count_macs(net, MacDomain::spatial).total_spatial_dense() == 8);
  CHECK_THROWS_AS(count_macs(net, MacDomain::winograd), std::invalid_argument);
}

TEST_CASE("report rendering") {
  MacReport r = count_macs(resnet18_modified(), MacDomain::both);
  const std::string text = r.to_text();
  CHECK(text.find("2334.3M") != std::string::npos);
  CHECK(text.find("1161.2M") != std::string::npos);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("layer,", 0) == 0);
  CHECK(csv.find("total,,2334298112") != std::string::npos);
}
