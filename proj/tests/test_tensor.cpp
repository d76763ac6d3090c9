#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "unisparse/autograd.hpp"

using namespace unisparse;
using testing_support::finite_difference;
using testing_support::naive_conv2d;
using testing_support::random_tensor;
using testing_support::relative_error;

TEST_CASE("forward of elementary graphs") {
  Graph g;
  auto x = g.input("x");
  auto id = g.identity(x);
  auto r = g.relu(x);
  CHECK(g.forward(id, {{"x", Tensor::vector({1, 2, 3})}}).values() ==
        std::vector<double>{1, 2, 3});
  CHECK(g.forward(r, {{"x", Tensor::vector({-1, 0, 2})}}).values() ==
        std::vector<double>{0, 0, 2});

  auto labels = g.input("labels");
  auto loss = g.softmax_cross_entropy(x, labels);
  const Tensor& v = g.forward(loss, {{"x", Tensor::vector({0, 0})},
                                     {"labels", Tensor::vector({0})}});
  CHECK(v[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("backward of elementary graphs") {
  Graph g;
  auto x = g.parameter("x", Tensor::vector({1, 2}));
  auto root = g.sum(g.square(x));
  g.forward(root);
  g.backward(root);
  CHECK(g.grad(x).values() == std::vector<double>{2, 4});

  Graph h;
  auto y = h.parameter("y", Tensor::vector({-1, 2}));
  auto s = h.sum(h.relu(y));
  h.forward(s);
  h.backward(s);
  CHECK(h.grad(y).values() == std::vector<double>{0, 1});

  Graph z;
  auto at_zero = z.parameter("z", Tensor::vector({0.0}));
  auto rz = z.sum(z.relu(at_zero));
  z.forward(rz);
  z.backward(rz);
  CHECK(z.grad(at_zero)[0] == 0.0);
}

TEST_CASE("backward requires a scalar root and a prior forward") {
  Graph g;
  auto x = g.parameter("x", Tensor::vector({1, 2}));
  auto sq = g.square(x);
  CHECK_THROWS_AS(g.backward(sq), std::logic_error);
  g.forward(sq);
  CHECK_THROWS_AS(g.backward(sq), ShapeError);
}

TEST_CASE("shape mismatch names the offending op") {
  Graph g;
  auto a = g.parameter("a", Tensor::vector({1, 2}));
  auto b = g.parameter("b", Tensor::vector({1, 2, 3}));
  auto s = g.add(a, b);
  try {
    g.forward(s);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
  Graph h;
  auto in = h.input("x");
  auto w = h.parameter("w", Tensor({1, 1, 5, 5}));
  auto c = h.conv2d(in, w);
  try {
    h.forward(c, {{"x", Tensor({1, 3, 3})}});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("conv2d") != std::string::npos);
  }
  CHECK_THROWS_AS(h.forward(c), std::invalid_argument);
}

TEST_CASE("conv2d examples") {
  Tensor ones({1, 4, 4}, 1.0);
  Tensor f({1, 1, 3, 3}, 1.0);
  Tensor out = conv2d(ones, f);
  CHECK(out.shape() == Shape{1, 2, 2});
  for (double v : out.data()) CHECK(v == 9.0);

  Tensor impulse({1, 3, 3});
  impulse.at({0, 1, 1}) = 1.0;
  Tensor k({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(conv2d(impulse, k).values() == std::vector<double>{4, 3, 2, 1});

  SplitMix64 rng(11);
  Tensor x = random_tensor({2, 8, 8}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  CHECK(max_abs_diff(conv2d(x, w), naive_conv2d(x, w)) < 1e-13);

  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3})), ShapeError);
}

TEST_CASE("batched conv2d equals per-image conv2d") {
  SplitMix64 rng(5);
  Tensor x = random_tensor({3, 2, 6, 7}, rng);
  Tensor w = random_tensor({4, 2, 3, 3}, rng);
  Tensor y = conv2d(x, w);
  for (std::size_t n = 0; n < 3; ++n) {
    Tensor xi({2, 6, 7}, std::vector<double>(x.values().begin() + n * 84,
                                             x.values().begin() + (n + 1) * 84));
    Tensor yi = conv2d(xi, w);
    for (std::size_t i = 0; i < yi.size(); ++i) CHECK(y[n * yi.size() + i] == yi[i]);
  }
}

TEST_CASE("conv2d is bilinear") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({2, 6, 6}, rng);
    Tensor y = random_tensor({2, 6, 6}, rng);
    Tensor w = random_tensor({2, 2, 3, 3}, rng);
    Tensor v = random_tensor({2, 2, 3, 3}, rng);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Tensor mix(x.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
    Tensor lhs = conv2d(mix, w);
    Tensor cx = conv2d(x, w), cy = conv2d(y, w);
    Tensor rhs(lhs.shape());
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = a * cx[i] + b * cy[i];
    CHECK(max_abs_diff(lhs, rhs) < 1e-12);

    Tensor wmix(w.shape());
    for (std::size_t i = 0; i < wmix.size(); ++i) wmix[i] = a * w[i] + b * v[i];
    Tensor lw = conv2d(x, wmix);
    Tensor cw = conv2d(x, w), cv = conv2d(x, v);
    for (std::size_t i = 0; i < lw.size(); ++i) rhs[i] = a * cw[i] + b * cv[i];
    CHECK(max_abs_diff(lw, rhs) < 1e-12);
  }
}

namespace {

// A small CNN touching every differentiable op.
struct Composite {
  Graph g;
  Graph::Var x, w1, w2, bias, loss;
  Composite() {
    x = g.input("x");
    auto labels = g.input("labels");
    w1 = g.parameter("w1", Tensor({2, 1, 3, 3}));
    w2 = g.parameter("w2", Tensor({3, 8}));
    bias = g.parameter("bias", Tensor({2, 3}));
    auto h = g.maxpool2d(g.relu(g.conv2d(x, w1)), 2);
    auto logits = g.add(g.linear(g.flatten(h), w2), g.scale(g.mul(bias, bias), 0.5));
    auto ce = g.softmax_cross_entropy(logits, labels);
    auto reg = g.mean(g.square(g.sub(g.identity(bias), g.constant(Tensor({2, 3}, 0.1)))));
    loss = g.add(ce, reg);
  }
};

}  // namespace

TEST_CASE("composite gradients match central finite differences") {
  SplitMix64 rng(2024);
  Composite net;
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, Tensor> inputs{
        {"x", random_tensor({2, 1, 6, 6}, rng)},
        {"labels", Tensor::vector({static_cast<double>(rng.below(3)),
                                   static_cast<double>(rng.below(3))})}};
    for (auto p : net.g.parameters()) {
      Tensor& v = net.g.parameter_value(p);
      for (double& e : v.data()) e = rng.uniform(-1, 1);
    }
    net.g.forward(net.loss, inputs);
    net.g.backward(net.loss);
    for (auto p : net.g.parameters()) {
      const Tensor analytic = net.g.grad(p);
      const Tensor saved = net.g.parameter_value(p);
      auto f = [&](const Tensor& t) {
        net.g.parameter_value(p) = t;
        return net.g.forward(net.loss, inputs)[0];
      };
      const Tensor numeric = finite_difference(f, saved);
      net.g.parameter_value(p) = saved;
      CHECK(relative_error(analytic, numeric) < 1e-4);
    }
  }
}

TEST_CASE("backward of independent subgraphs is the union of their backwards") {
  SplitMix64 rng(8);
  Tensor a0 = random_tensor({4}, rng), b0 = random_tensor({1, 5, 5}, rng);
  Tensor wb = random_tensor({2, 1, 2, 2}, rng);

  Graph joint;
  auto a = joint.parameter("a", a0);
  auto b = joint.parameter("b", b0);
  auto w = joint.parameter("w", wb);
  auto ra = joint.sum(joint.square(a));
  auto rb = joint.sum(joint.relu(joint.conv2d(b, w)));
  auto root = joint.add(ra, rb);
  joint.forward(root);
  joint.backward(root);

  Graph ga;
  auto a2 = ga.parameter("a", a0);
  auto ra2 = ga.sum(ga.square(a2));
  ga.forward(ra2);
  ga.backward(ra2);

  Graph gb;
  auto b2 = gb.parameter("b", b0);
  auto w2 = gb.parameter("w", wb);
  auto rb2 = gb.sum(gb.relu(gb.conv2d(b2, w2)));
  gb.forward(rb2);
  gb.backward(rb2);

  CHECK(joint.grad(a) == ga.grad(a2));
  CHECK(joint.grad(b) == gb.grad(b2));
  CHECK(joint.grad(w) == gb.grad(w2));
}

TEST_CASE("outputs stay finite on finite inputs") {
  Graph g;
  auto z = g.input("z");
  auto labels = g.input("labels");
  auto loss = g.softmax_cross_entropy(z, labels);
  const Tensor& v = g.forward(loss, {{"z", Tensor::vector({1000.0, -1000.0, 0.0})},
                                     {"labels", Tensor::vector({1})}});
  CHECK(std::isfinite(v[0]));
  g.backward(loss);
  CHECK(g.grad(z).all_finite());
}
