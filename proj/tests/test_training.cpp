#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "unisparse/training.hpp"

using namespace unisparse;
using testing_support::finite_difference;
using testing_support::relative_error;

namespace {

DatasetHandle small_data() { return ingest_dataset("synthetic:3x60x12:seed=5"); }

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("unisparse_" + name);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.iterations = 5;
  c.batch_size = 8;
  c.log_every = 1;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("synthetic dataset contract") {
  const DatasetHandle a = ingest_dataset("synthetic:10x1000x16:seed=7");
  CHECK(a.train.size() == 800);
  CHECK(a.test.size() == 200);
  CHECK(a.train.height == 16);
  CHECK(a.train.classes == 10);
  const DatasetHandle b = ingest_dataset("synthetic:10x1000x16:seed=7");
  CHECK(a.train.pixels == b.train.pixels);
  CHECK(a.test.labels == b.test.labels);
  const DatasetHandle c = ingest_dataset("synthetic:10x1000x16:seed=8");
  CHECK(a.train.pixels != c.train.pixels);
  for (std::uint32_t l : a.train.labels) CHECK(l < 10);
  CHECK(a.stddev > 0.0);

  const Tensor x = a.all_images(a.train);
  double mean = 0.0;
  for (double v : x.data()) mean += v;
  CHECK(std::fabs(mean / static_cast<double>(x.size())) < 1e-9);

  CHECK_THROWS_AS(ingest_dataset("synthetic:10x1000"), DatasetError);
  CHECK_THROWS_AS(ingest_dataset("synthetic:1x10x16"), DatasetError);
}

TEST_CASE("IDX round trip and errors") {
  const Dataset d = generate_synthetic({4, 40, 8, 1});
  const auto img = temp_path("img.idx"), lab = temp_path("lab.idx");
  write_idx(d, img.string(), lab.string());
  const Dataset back = read_idx(img.string(), lab.string());
  CHECK(back.pixels == d.pixels);
  CHECK(back.labels == d.labels);
  CHECK(back.classes == 4);
  const DatasetHandle h = ingest_dataset(img.string() + "," + lab.string());
  CHECK(h.train.size() == 32);
  CHECK(h.test.size() == 8);

  // Swapped files: the image reader sees the label magic.
  try {
    read_idx(lab.string(), img.string());
    FAIL("expected a magic error");
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("0x00000803") != std::string::npos);
    CHECK(msg.find("byte offset 0") != std::string::npos);
  }

  // Truncate the pixel data.
  std::filesystem::resize_file(img, 16 + 10);
  try {
    read_idx(img.string(), lab.string());
    FAIL("expected a truncation error");
  } catch (const DatasetError& e) {
    CHECK(std::string(e.what()).find("byte offset 26") != std::string::npos);
  }
  std::filesystem::remove(img);
  std::filesystem::remove(lab);
}

TEST_CASE("filter bank layout") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const FilterBank w = init_filter_bank(net, 1);
  CHECK(w.count() == 3);
  CHECK(w.size() == 72 + 1152 + 48);
  FilterBank copy = zeros_like(w);
  CHECK(copy.zero_count() == w.size());
  copy.assign(w.flatten());
  CHECK(copy == w);
  CHECK_THROWS_AS(copy.assign(std::vector<double>(3)), ShapeError);
  CHECK(init_filter_bank(net, 1) == w);
  CHECK(!(init_filter_bank(net, 2) == w));
}

TEST_CASE("descriptor-only networks are not executable") {
  CHECK_THROWS_AS(require_executable(resnet18_modified()), SpecError);
  CHECK_THROWS_AS(require_executable(alexnet()), SpecError);
  CHECK_NOTHROW(require_executable(tiny_cnn()));
}

TEST_CASE("loss gradient matches finite differences") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  const std::vector<std::size_t> idx = {0, 1, 2, 3};
  const Tensor x = data.images(data.train, idx), y = data.labels(data.train, idx);
  LossGraph graph(net);
  SplitMix64 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    const FilterBank w = init_filter_bank(net, rng.next());
    FilterBank grad;
    graph.loss_and_gradient(w, x, y, grad);
    for (std::size_t l = 0; l < w.count(); ++l) {
      const Tensor num = finite_difference(
          [&](const Tensor& t) {
            FilterBank p = w;
            p.tensors[l] = t;
            return graph.loss(p, x, y);
          },
          w.tensors[l]);
      CHECK(relative_error(grad.tensors[l], num) <= 1e-4);
    }
  }
}

TEST_CASE("inference agrees with the loss graph") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  const std::vector<std::size_t> idx = {4, 5, 6};
  const Tensor x = data.images(data.train, idx), y = data.labels(data.train, idx);
  const FilterBank w = init_filter_bank(net, 4);
  const Tensor logits = infer_spatial(net, w, x);
  double ce = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    double mx = -INFINITY, z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) mx = std::max(mx, logits.at({s, k}));
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits.at({s, k}) - mx);
    ce += std::log(z) + mx - logits.at({s, static_cast<std::size_t>(y[s])});
  }
  LossGraph graph(net);
  CHECK(graph.loss(w, x, y) == doctest::Approx(ce / 3).epsilon(1e-12));
}

TEST_CASE("accuracy ranks ties by class index") {
  const Tensor logits({2, 3}, {1.0, 1.0, 0.0, 0.0, 2.0, 2.0});
  const Accuracy a = accuracy(logits, Tensor({2}, {1.0, 2.0}));
  CHECK(a.top1 == 0.0);
  CHECK(a.top5 == 1.0);
  const Accuracy b = accuracy(logits, Tensor({2}, {0.0, 1.0}));
  CHECK(b.top1 == 1.0);
  CHECK(b.top1_hits == 2);
}

TEST_CASE("histograms") {
  const std::vector<double> zeros(20, 0.0);
  const Histogram z = histogram(zeros, 5);
  CHECK(z.counts[z.bin_of(0.0)] == 20);
  CHECK(z.total() == 20);

  const NetworkSpec net = tiny_cnn(12, 3);
  const FilterBank w = init_filter_bank(net, 1);
  const PlanSet plans = plans_for(net);
  const Histogram hs = snapshot_histogram(w, plans, 1, Domain::spatial, 21);
  CHECK(hs.total() == 1152);
  const Histogram hw = snapshot_histogram(w, plans, 1, Domain::winograd, 21);
  CHECK(hw.total() == 128 * 16);
  CHECK_THROWS_AS(snapshot_histogram(w, plans, 2, Domain::winograd, 21), std::invalid_argument);
  CHECK_THROWS_AS(histogram(zeros, 1), std::invalid_argument);
}

TEST_CASE("zero learning rate leaves weights and coefficients unchanged") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  TrainConfig c = quick_config();
  c.iterations = 1;
  c.learning_rate = 0.0;
  c.zeta_learning_rate = 0.0;
  c.sparsity.s_wd = 50;
  c.sparsity.s_sd = 50;
  const TrainResult r = train(net, data, c);
  CHECK(r.weights == init_filter_bank(net, c.seed));
  CHECK(r.state.zeta_wd == c.zeta0);
  CHECK(r.state.zeta_sd == c.zeta0);
  const PlanSet plans = plans_for(net);
  CHECK(r.state.theta_sd == spatial_partial_l2(r.weights, 50).thresholds.front());
  CHECK(r.state.theta_wd == winograd_partial_l2(r.weights, plans, 50).thresholds.front());
}

TEST_CASE("unregularized training has vanishing regularizers") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  TrainConfig c = quick_config();
  const TrainResult r = train(net, data, c);
  for (const MetricsRow& row : r.metrics) {
    CHECK(row.r_wd == 0.0);
    CHECK(row.r_sd == 0.0);
  }
  // dC/dzeta = -alpha throughout, so Adam raises zeta by lr each step.
  CHECK(r.state.zeta_wd == doctest::Approx(c.zeta0 + 5 * c.zeta_learning_rate).epsilon(1e-6));
}

TEST_CASE("regularized training is deterministic and tracks its thresholds") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  TrainConfig c = quick_config();
  c.iterations = 20;
  c.sparsity.s_wd = 70;
  c.sparsity.s_sd = 60;
  c.histogram_every = 10;
  const TrainResult a = train(net, data, c);
  const TrainResult b = train(net, data, c);
  CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
  CHECK(a.weights == b.weights);
  CHECK(histograms_csv(a.histograms) == histograms_csv(b.histograms));
  CHECK(a.histograms.size() == 4);
  REQUIRE(a.metrics.size() == 20);

  // zeta rises while e^zeta R < alpha.
  double prev = c.zeta0;
  for (const MetricsRow& row : a.metrics) {
    if (std::exp(row.zeta_wd) * row.r_wd < c.sparsity.alpha) CHECK(row.zeta_wd > prev);
    prev = row.zeta_wd;
  }

  // Nearest-rank: exactly ceil(s N / 100) magnitudes at or below theta
  // (ties aside) for the final weights.
  const RegularizerValue sd = spatial_partial_l2(a.weights, 60);
  const std::size_t n = a.weights.size();
  const auto expected = static_cast<std::size_t>(std::ceil(0.6 * static_cast<double>(n)));
  CHECK(sd.regularized >= expected);
  CHECK(sd.regularized <= expected + 1);

  const std::string csv = metrics_csv(a.metrics);
  CHECK(csv.rfind("iteration,E,R_WD,R_SD,zeta_WD,zeta_SD,theta_WD,theta_SD,accuracy\n", 0) == 0);
}

TEST_CASE("divergence and config guards") {
  const NetworkSpec net = tiny_cnn(12, 3);
  const DatasetHandle data = small_data();
  FilterBank bad = init_filter_bank(net, 1);
  bad.tensors[2][0] = NAN;
  CHECK_THROWS_AS(train(net, data, quick_config(), bad), TrainingDiverged);

  TrainConfig c = quick_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(train(net, data, c), std::invalid_argument);
  CHECK_THROWS_AS(train(tiny_cnn(16, 3), data, quick_config()), ShapeError);
  CHECK(parse_domain("winograd") == Domain::winograd);
  CHECK_THROWS_AS(parse_domain("fourier"), std::invalid_argument);
}
