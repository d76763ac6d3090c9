// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 4, 6 and 8-10 share the desk models trained once
// for criterion 4.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "unisparse/cli.hpp"
#include "unisparse/compression.hpp"
#include "unisparse/deploy.hpp"
#include "unisparse/lzw.hpp"
#include "unisparse/training.hpp"

using namespace unisparse;
using testing_support::finite_difference;
using testing_support::naive_conv2d;
using testing_support::random_tensor;
using testing_support::relative_error;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      note("failed: " + what);
    }
  }
  void note(const std::string& text) {
    if (!detail.empty()) detail += "; ";
    detail += text;
  }
};

std::string format(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ 1

Outcome winograd_exactness() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  SplitMix64 rng(20240601);
  double worst = 0.0;
  for (auto [r, n] : {std::pair{2, 3}, {3, 4}, {3, 6}, {5, 8}}) {
    const WinogradPlan p = build_plan(r, n);
    const auto nn = static_cast<std::size_t>(n), rr = static_cast<std::size_t>(r);
    const std::size_t m = nn - rr + 1;
    // Every unit-basis patch against every unit-basis filter, one tile.
    for (std::size_t xi = 0; xi < nn * nn; ++xi) {
      Tensor x({1, nn, nn});
      x[xi] = 1.0;
      for (std::size_t wi = 0; wi < rr * rr; ++wi) {
        Tensor w({1, 1, rr, rr});
        w[wi] = 1.0;
        const Tensor direct = naive_conv2d(x, w);
        const Tensor wino = winograd_conv2d(x, w, p);
        worst = std::max(worst, max_abs_diff(wino, direct.reshaped({1, m, m})));
      }
    }
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t h = rr + rng.below(10), w = rr + rng.below(10);
      const Tensor x = random_tensor({2, h, w}, rng);
      const Tensor f = random_tensor({3, 2, rr, rr}, rng);
      worst = std::max(worst, max_abs_diff(winograd_conv2d(x, f, p), naive_conv2d(x, f)));
    }
  }
  const double t = seconds_since(t0);
  o.require(worst <= 1e-9, "max deviation <= 1e-9");
  o.require(t < 10.0, "runtime < 10 s");
  o.note(format("max deviation %.3g over (2,3),(3,4),(3,6),(5,8), %.2f s", worst, t));
  return o;
}

// ------------------------------------------------------------------ 2

// Central differences on a random subset of coordinates of one layer.
double sampled_error(const std::function<double(const FilterBank&)>& f, const FilterBank& w,
                     std::size_t layer, const Tensor& analytic, SplitMix64& rng,
                     std::size_t samples, double step) {
  const std::size_t n = w.tensors[layer].size();
  Tensor num({std::min(samples, n)}), ana({std::min(samples, n)});
  FilterBank p = w;
  for (std::size_t k = 0; k < num.size(); ++k) {
    const std::size_t i = samples >= n ? k : rng.below(n);
    const double saved = p.tensors[layer][i];
    p.tensors[layer][i] = saved + step;
    const double up = f(p);
    p.tensors[layer][i] = saved - step;
    const double down = f(p);
    p.tensors[layer][i] = saved;
    num[k] = (up - down) / (2.0 * step);
    ana[k] = analytic[i];
  }
  return relative_error(ana, num);
}

Outcome gradient_fidelity() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const NetworkSpec net = tiny_cnn(12, 3);
  const PlanSet plans = plans_for(net);
  const DatasetHandle data = ingest_dataset("synthetic:3x120x12:seed=11");
  LossGraph graph(net);
  SplitMix64 rng(777);
  const int instances = 100;
  double worst_e = 0.0, worst_wd = 0.0, worst_sd = 0.0, worst_zeta = 0.0;
  for (int trial = 0; trial < instances; ++trial) {
    const FilterBank w = init_filter_bank(net, rng.next());
    std::vector<std::size_t> idx(4);
    for (auto& i : idx) i = rng.below(data.train.size());
    const Tensor x = data.images(data.train, idx), y = data.labels(data.train, idx);
    const double s_wd = rng.uniform(5.0, 100.0), s_sd = rng.uniform(5.0, 100.0);
    const ThresholdScope scope = trial % 2 ? ThresholdScope::per_layer : ThresholdScope::global;

    FilterBank ge;
    const double e = graph.loss_and_gradient(w, x, y, ge);
    const RegularizerValue wd = winograd_partial_l2(w, plans, s_wd, scope);
    const RegularizerValue sd = spatial_partial_l2(w, s_sd, scope);
    for (std::size_t l = 0; l < w.count(); ++l) {
      worst_e = std::max(worst_e, sampled_error([&](const FilterBank& p) { return graph.loss(p, x, y); },
                                                w, l, ge.tensors[l], rng, 48, 1e-5));
      worst_wd = std::max(
          worst_wd, sampled_error([&](const FilterBank& p) { return winograd_partial_l2(p, plans, s_wd, scope).value; },
                                  w, l, wd.gradient.tensors[l], rng, 48, 1e-7));
      worst_sd = std::max(
          worst_sd, sampled_error([&](const FilterBank& p) { return spatial_partial_l2(p, s_sd, scope).value; },
                                  w, l, sd.gradient.tensors[l], rng, 48, 1e-7));
    }

    const double alpha = rng.uniform(0.25, 4.0);
    Tensor zeta({2}, {rng.uniform(-5.0, 8.0), rng.uniform(-5.0, 8.0)});
    const JointCost c = joint_cost(e, wd.value, sd.value, zeta[0], zeta[1], alpha);
    const Tensor num = finite_difference(
        [&](const Tensor& z) { return joint_cost(e, wd.value, sd.value, z[0], z[1], alpha).cost; },
        zeta, 1e-6);
    worst_zeta = std::max(worst_zeta, relative_error(Tensor({2}, {c.d_zeta_wd, c.d_zeta_sd}), num));
  }
  const double t = seconds_since(t0);
  o.require(worst_e <= 1e-4, "dE/dw");
  o.require(worst_wd <= 1e-4, "dR_WD/dw");
  o.require(worst_sd <= 1e-4, "dR_SD/dw");
  o.require(worst_zeta <= 1e-4, "dC/dzeta");
  o.require(t < 60.0, "runtime < 60 s");
  o.note(format("%d instances, worst relative error E %.2g, R_WD %.2g, R_SD %.2g, zeta %.2g, %.1f s",
                instances, worst_e, worst_wd, worst_sd, worst_zeta, t));
  return o;
}

// ------------------------------------------------------------------ 3

Outcome zeta_equilibrium() {
  Outcome o;
  const NetworkSpec net = tiny_cnn(16, 10);
  const PlanSet plans = plans_for(net);
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const FilterBank w = init_filter_bank(net, seed);
    const double r_wd = winograd_partial_l2(w, plans, 70).value;
    const double r_sd = spatial_partial_l2(w, 70).value;
    for (double alpha : {0.5, 1.0, 2.0}) {
      // Plain gradient descent on (zeta_WD, zeta_SD); the weights never move.
      double zwd = std::log(1e-4), zsd = std::log(1e-4);
      const double step = 0.5;
      for (int it = 0; it < 5000; ++it) {
        const JointCost c = joint_cost(0.0, r_wd, r_sd, zwd, zsd, alpha);
        zwd -= step * c.d_zeta_wd;
        zsd -= step * c.d_zeta_sd;
      }
      worst = std::max({worst, std::fabs(std::exp(zwd) * r_wd / alpha - 1.0),
                        std::fabs(std::exp(zsd) * r_sd / alpha - 1.0)});
    }
  }
  o.require(worst <= 1e-6, "e^zeta = alpha/R within 1e-6");
  o.note(format("alpha in {0.5, 1, 2}, 3 frozen weight draws, worst |e^zeta R/alpha - 1| = %.2g", worst));
  return o;
}

// ------------------------------------------------------------------ 4, 10

const char* const kDesk = "synthetic:10x5000x16:seed=7";

struct Desk {
  DatasetHandle data;
  NetworkSpec net;
  TrainConfig config;
  TrainResult baseline, sd_only, wd_only, joint;
  double seconds = 0.0;
};

double top1(const DeployedModel& m, const DatasetHandle& data) {
  return 100.0 * evaluate(m, data, data.test).accuracy.top1;
}

struct PrunedAccuracy {
  double dense, spatial70, winograd70;
};

PrunedAccuracy pruned_accuracy(const Desk& d, const FilterBank& w) {
  return {top1(deploy_spatial(d.net, w), d.data),
          top1(deploy_spatial(d.net, prune_spatial(w, 70).spatial), d.data),
          top1(deploy_winograd(d.net, w, 70), d.data)};
}

TrainResult train_desk(const Desk& d, double s_wd, double s_sd) {
  TrainConfig c = d.config;
  c.sparsity.s_wd = s_wd;
  c.sparsity.s_sd = s_sd;
  return train(d.net, d.data, c);
}

Desk train_desk_models() {
  Desk d{ingest_dataset(kDesk), {}, {}, {}, {}, {}, {}, 0.0};
  d.net = tiny_cnn(d.data.train.height, d.data.train.classes);
  d.config.iterations = 4000;
  d.config.log_every = 100;
  d.config.eval_samples = 500;
  d.config.seed = 1;
  const auto t0 = std::chrono::steady_clock::now();
  d.baseline = train_desk(d, 0, 0);
  d.sd_only = train_desk(d, 0, 70);
  d.wd_only = train_desk(d, 70, 0);
  d.joint = train_desk(d, 70, 70);
  d.seconds = seconds_since(t0);
  return d;
}

Outcome joint_universality(const Desk& d) {
  Outcome o;
  const PrunedAccuracy base = pruned_accuracy(d, d.baseline.weights);
  const PrunedAccuracy sd = pruned_accuracy(d, d.sd_only.weights);
  const PrunedAccuracy wd = pruned_accuracy(d, d.wd_only.weights);
  const PrunedAccuracy joint = pruned_accuracy(d, d.joint.weights);
  const double sd_gap = sd.spatial70 - sd.winograd70;
  const double wd_gap = wd.winograd70 - wd.spatial70;
  o.require(sd_gap >= 5.0, "SD-only loses >= 5 more points pruned in the Winograd domain");
  o.require(wd_gap >= 5.0, "WD-only loses >= 5 more points pruned in the spatial domain");
  o.require(base.dense - joint.spatial70 <= 2.0, "WD+SD at 70% spatial within 2 points of baseline");
  o.require(base.dense - joint.winograd70 <= 2.0, "WD+SD at 70% Winograd within 2 points of baseline");
  o.require(d.seconds <= 1800.0, "runtime <= 30 min");
  o.note(format("top-1 dense/SD70/WD70: baseline %.1f/%.1f/%.1f, SD-only %.1f/%.1f/%.1f, "
                "WD-only %.1f/%.1f/%.1f, WD+SD %.1f/%.1f/%.1f; asymmetry %.1f and %.1f points; "
                "4 runs of %zu iterations in %.0f s",
                base.dense, base.spatial70, base.winograd70, sd.dense, sd.spatial70, sd.winograd70,
                wd.dense, wd.spatial70, wd.winograd70, joint.dense, joint.spatial70,
                joint.winograd70, sd_gap, wd_gap, d.config.iterations, d.seconds));
  return o;
}

Outcome determinism(const Desk& d) {
  Outcome o;
  const TrainResult again = train_desk(d, 70, 70);
  const std::string a = metrics_csv(d.joint.metrics), b = metrics_csv(again.metrics);
  o.require(a == b, "metrics logs bit-identical");
  o.require(again.weights == d.joint.weights, "weights bit-identical");
  o.note(format("WD+SD rerun: %zu metrics rows, %zu bytes, identical: %s", again.metrics.size(),
                b.size(), a == b ? "yes" : "no"));
  return o;
}

// ------------------------------------------------------------------ 5

Outcome mac_table() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream out, err;
  const int code = run({"unisparse", "macs", "--net", "resnet18-modified", "--domain", "both"}, out, err);
  const double t = seconds_since(t0);
  o.require(code == 0, "macs subcommand exits 0");
  o.require(out.str().find("residual") != std::string::npos, "report prints the residual gap");

  bool any_policy = false;
  for (CountingPolicy policy : {CountingPolicy::elementwise_only, CountingPolicy::full}) {
    const MacReport r = count_macs(resnet18_modified(), MacDomain::both, {}, policy);
    const double sp = static_cast<double>(r.total_spatial_dense()) / 1e6;
    const double wi = static_cast<double>(r.total_winograd_dense()) / 1e6;
    const double e_sp = (sp - 2347.1) / 2347.1, e_wi = (wi - 1174.0) / 1174.0;
    const bool ok = std::fabs(e_sp) <= 0.05 && std::fabs(e_wi) <= 0.05;
    any_policy = any_policy || ok;
    o.note(format("%s: %.1fM (%+.2f%%) spatial, %.1fM (%+.2f%%) Winograd", to_string(policy), sp,
                  100 * e_sp, wi, 100 * e_wi));
  }
  o.require(any_policy, "one policy within 5% of 2347.1M and 1174.0M");
  o.require(t < 1.0, "runtime < 1 s");
  return o;
}

// ------------------------------------------------------------------ 6

Outcome mac_scaling(const Desk& d) {
  Outcome o;
  const FilterBank& w = d.joint.weights;
  std::vector<DeployedModel> models;
  for (double s : {0.0, 30.0, 70.0, 90.0}) {
    models.push_back(deploy_spatial(d.net, prune_spatial(w, s).spatial));
    models.push_back(deploy_winograd(d.net, w, s));
  }
  const CompressedModel c = compress(d.net, w, search_delta(w.flatten(), 70, 3), 3);
  models.push_back(deploy_spatial(c));
  models.push_back(deploy_winograd(c, 70));

  std::size_t checked = 0;
  for (const DeployedModel& m : models) {
    const Evaluation ev = evaluate(m, d.data, d.data.test);
    const MacReport dense = count_macs(m.net, m.domain == Domain::winograd ? MacDomain::both : MacDomain::spatial);
    for (std::size_t l = 0; l < ev.layer_macs.size(); ++l) {
      const auto& row = m.sparsity.layers[l];
      const LayerMacs& lm = dense.layers[l];
      const bool winograd = m.domain == Domain::winograd && m.banks[l].has_value();
      const std::uint64_t full = winograd ? lm.winograd_elementwise_dense : lm.spatial_dense;
      // measured == dense * (1 - zeros/total), compared without division.
      o.require(ev.layer_macs[l] * row.total == full * (row.total - row.zeros),
                format("%s layer %zu", to_string(m.domain), l));
      ++checked;
    }
  }
  o.note(format("%zu deployed layers checked across %zu deployments", checked, models.size()));
  return o;
}

// ------------------------------------------------------------------ 7

std::vector<std::int64_t> adversarial_stream(std::size_t k, SplitMix64& rng) {
  std::vector<std::int64_t> v;
  const std::size_t len = rng.below(2000);
  switch (k % 8) {
    case 0:  // one long run
      v.assign(len, static_cast<std::int64_t>(rng.below(3)) - 1);
      break;
    case 1:  // extremes of the value range
      for (std::size_t i = 0; i < len; ++i) {
        const std::int64_t e[] = {INT64_MIN, INT64_MAX, 0, -1, 1, INT64_MIN + 1, INT64_MAX - 1};
        v.push_back(e[rng.below(7)]);
      }
      break;
    case 2:  // cScSc patterns that hit the not-yet-defined code case
      for (std::size_t i = 0; i < len; ++i) v.push_back(i % 3 == 1 ? 5 : 0);
      break;
    case 3:  // varint boundaries
      for (std::size_t i = 0; i < len; ++i) {
        const int bits = static_cast<int>(rng.below(63));
        const std::int64_t b = std::int64_t{1} << bits;
        v.push_back(rng.below(2) ? b : -b - static_cast<std::int64_t>(rng.below(2)));
      }
      break;
    case 4:  // slowly varying ramp
      for (std::size_t i = 0; i < len; ++i) v.push_back(static_cast<std::int64_t>(i / 7) - 100);
      break;
    case 5:  // single values
      v.assign(rng.below(3), static_cast<std::int64_t>(rng.next()));
      break;
    case 6:  // high-entropy bytes that grow the dictionary fastest
      for (std::size_t i = 0; i < len * 4; ++i) v.push_back(static_cast<std::int64_t>(rng.next()));
      break;
    default:  // mostly zeros with sparse spikes, like pruned levels
      for (std::size_t i = 0; i < len * 4; ++i)
        v.push_back(rng.below(10) < 7 ? 0 : static_cast<std::int64_t>(rng.below(41)) - 20);
      break;
  }
  return v;
}

Outcome compression_correctness(const Desk& d) {
  Outcome o;
  SplitMix64 rng(4242);
  std::size_t streams = 0, mismatches = 0;
  auto roundtrip = [&](const std::vector<std::int64_t>& v) {
    ++streams;
    if (entropy_decode(entropy_encode(v)) != v) ++mismatches;
  };
  for (int k = 0; k < 10000; ++k) {
    std::vector<std::int64_t> v(rng.below(600));
    const std::uint64_t range = std::uint64_t{1} << rng.below(40);
    for (auto& x : v) x = static_cast<std::int64_t>(rng.below(2 * range + 1)) - static_cast<std::int64_t>(range);
    roundtrip(v);
  }
  for (std::size_t k = 0; k < 10000; ++k) roundtrip(adversarial_stream(k, rng));
  // Streams long enough to force dictionary resets.
  std::size_t resets = 0;
  for (int k = 0; k < 4; ++k) {
    std::vector<std::uint8_t> bytes(400000 + rng.below(100000));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(k % 2 ? rng.next() : rng.below(4));
    const auto enc = lzw_encode(bytes);
    if (lzw_decode(enc) != bytes) ++mismatches;
    ++resets;
  }
  o.require(mismatches == 0, "entropy coder round trips");
  o.note(format("%zu level streams and %zu dictionary-reset byte streams, %zu mismatches", streams,
                resets, mismatches));

  // (b) and (c) on the desk WD+SD model.
  const FilterBank& w = d.joint.weights;
  const std::vector<double> a = w.flatten();
  const double delta = search_delta(a, 70, 17);
  const CompressedModel cm = compress(d.net, w, delta, 17);
  const std::vector<double> q = reconstruct(cm).flatten();
  double worst = 0.0;
  std::size_t zero_violations = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (cm.record.levels[i] == 0) {
      zero_violations += q[i] != 0.0;
    } else {
      worst = std::max(worst, std::fabs(q[i] - a[i]) / delta);
    }
  }
  // One rounding of (a + U) / delta can leave a few ulps of slack.
  o.require(worst <= 0.5 + 1e-12, "|q - a| <= delta/2");

  const auto bytes = write_container(cm);
  const CompressedModel back = read_container(bytes);
  FineTuneConfig fc;
  fc.steps = 20;
  fc.zeta_wd = d.joint.state.zeta_wd;
  const FineTuneResult ft = fine_tune_codebook(cm.record, d.net, d.data, fc);
  const CompressedModel tuned{d.net, ft.record};
  const auto tuned_bytes = write_container(tuned);
  const DeployedModel spatial = deploy_spatial(tuned_bytes);
  const DeployedModel wino = deploy_winograd(tuned_bytes, 70);
  const std::vector<std::vector<double>> stages = {
      reconstruct(back).flatten(), reconstruct(tuned).flatten(),
      reconstruct(read_container(tuned_bytes)).flatten(), spatial.weights.flatten()};
  for (const auto& stage : stages)
    for (std::size_t i = 0; i < a.size(); ++i) zero_violations += cm.record.levels[i] == 0 && stage[i] != 0.0;
  for (const auto& bank : wino.banks)
    if (bank)
      for (std::size_t i = 0; i < bank->total(); ++i) zero_violations += bank->pruned[i] && bank->weights[i] != 0.0;
  o.require(zero_violations == 0, "pruned positions stay exactly zero");

  // (d) determinism of the container bytes.
  const bool same = write_container(compress(d.net, w, delta, 17)) == bytes &&
                    write_container({d.net, fine_tune_codebook(cm.record, d.net, d.data, fc).record}) == tuned_bytes;
  o.require(same, "identical inputs give identical containers");
  o.note(format("max |q - a| = %.6f delta on %zu weights, %zu pruned, zero violations %zu, "
                "containers identical: %s",
                worst, a.size(), cm.record.pruned_count(), zero_violations, same ? "yes" : "no"));
  return o;
}

// ------------------------------------------------------------------ 8, 9

struct Compressed {
  CompressedModel quantized;
  FineTuneResult tuned;
};

Compressed compress_desk(const Desk& d) {
  const double delta = search_delta(d.joint.weights.flatten(), 70, 99);
  Compressed c{compress(d.net, d.joint.weights, delta, 99), {}};
  FineTuneConfig fc;
  fc.zeta_wd = d.joint.state.zeta_wd;
  fc.s_wd = 70;
  c.tuned = fine_tune_codebook(c.quantized.record, d.net, d.data, fc);
  return c;
}

Outcome fine_tune_contract(const Desk& d, const Compressed& c) {
  Outcome o;
  const CompressedModel tuned{d.net, c.tuned.record};
  const auto q = reconstruct(tuned).flatten();
  std::size_t violations = 0;
  for (std::size_t i = 0; i < q.size(); ++i) violations += c.quantized.record.levels[i] == 0 && q[i] != 0.0;
  o.require(violations == 0, "pruned weights still exactly 0");
  const double before = top1(deploy_winograd(c.quantized, 70), d.data);
  const double after = top1(deploy_winograd(write_container(tuned), 70), d.data);
  o.require(after >= before, "Winograd-pruned top-1 does not degrade");
  o.note(format("%zu steps, C %.5g -> %.5g, Winograd-pruned top-1 %.2f before and %.2f after",
                c.tuned.cost.size(), c.tuned.cost.front(), c.tuned.cost.back(), before, after));
  return o;
}

Outcome compression_ratio(const Desk& d, const Compressed& c) {
  Outcome o;
  const auto bytes = write_container(c.quantized);
  const ContainerStats st = container_stats(bytes);
  const double reference = top1(deploy_spatial(d.net, d.joint.weights), d.data);
  const double spatial = top1(deploy_spatial(bytes), d.data);
  const double wino = top1(deploy_winograd(bytes, 70), d.data);
  o.require(st.ratio() > 5.0, "CR > 5 including header and spec");
  o.require(reference - spatial <= 2.0, "spatial deployment within 2 points");
  o.require(reference - wino <= 2.0, "Winograd deployment within 2 points");
  const ContainerStats tuned = container_stats(write_container({d.net, c.tuned.record}));
  o.note(format("CR %.2f with overhead, %.2f payload only (%zu of %zu bytes); top-1 %.2f uncompressed, "
                "%.2f spatial, %.2f Winograd at 70%%; fine-tuned container CR %.2f",
                st.ratio(), st.payload_ratio(), st.container_bytes, st.dense_bytes, reference, spatial,
                wino, tuned.ratio()));
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  auto guarded = [&](auto&& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      return o;
    }
  };

  report(1, "winograd exactness", guarded(winograd_exactness));
  report(2, "gradient fidelity", guarded(gradient_fidelity));
  report(3, "zeta equilibrium", guarded(zeta_equilibrium));

  const Desk desk = train_desk_models();
  report(4, "joint-sparsity universality", guarded([&] { return joint_universality(desk); }));
  report(5, "MAC table", guarded(mac_table));
  report(6, "sparse-MAC scaling", guarded([&] { return mac_scaling(desk); }));
  report(7, "compression correctness", guarded([&] { return compression_correctness(desk); }));
  const Compressed compressed = compress_desk(desk);
  report(8, "fine-tuning contract", guarded([&] { return fine_tune_contract(desk, compressed); }));
  report(9, "desk compression ratio", guarded([&] { return compression_ratio(desk, compressed); }));
  report(10, "determinism", guarded([&] { return determinism(desk); }));

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
