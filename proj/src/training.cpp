#include "unisparse/training.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "unisparse/rng.hpp"

namespace unisparse {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !(zeta_learning_rate >= 0.0)) {
    throw std::invalid_argument("learning rates must be non-negative");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (iterations == 0) throw std::invalid_argument("iteration budget must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (!std::isfinite(zeta0)) throw std::invalid_argument("zeta0 must be finite");
  if (histogram_bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  sparsity.validate();
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "iteration,E,R_WD,R_SD,zeta_WD,zeta_SD,theta_WD,theta_SD,accuracy\n";
  char buf[512];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.iteration, r.e, r.r_wd, r.r_sd, r.zeta_wd, r.zeta_sd, r.theta_wd,
                  r.theta_sd, r.accuracy);
    os << buf;
  }
  return os.str();
}

std::size_t Histogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

std::size_t Histogram::bin_of(double v) const {
  const double width = (hi - lo) / static_cast<double>(counts.size());
  auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / width));
  return static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(counts.size()) - 1));
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  double m = 0.0;
  for (double v : values) m = std::max(m, std::fabs(v));
  if (m == 0.0) m = 1.0;
  Histogram h;
  h.lo = -m;
  h.hi = m;
  h.counts.assign(bins, 0);
  for (double v : values) ++h.counts[h.bin_of(v)];
  return h;
}

Histogram snapshot_histogram(const FilterBank& weights, const PlanSet& plans, std::size_t layer,
                             Domain domain, std::size_t bins) {
  if (layer >= weights.count()) {
    throw std::out_of_range("histogram layer " + std::to_string(layer) + " out of range");
  }
  if (domain == Domain::spatial) return histogram(weights.tensors[layer].data(), bins);
  if (layer >= plans.size() || !plans[layer]) {
    throw std::invalid_argument("histogram layer " + std::to_string(layer) +
                                " has no Winograd plan");
  }
  const Tensor& w = weights.tensors[layer];
  const auto r = w.dim(2);
  std::vector<double> values;
  for (std::size_t f = 0; f < w.dim(0) * w.dim(1); ++f) {
    std::vector<double> filt(w.data().begin() + static_cast<std::ptrdiff_t>(f * r * r),
                             w.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * r * r));
    Tensor t = transform_filter(Tensor({r, r}, std::move(filt)), *plans[layer]);
    values.insert(values.end(), t.data().begin(), t.data().end());
  }
  return histogram(values, bins);
}

std::string histograms_csv(const std::vector<HistogramSnapshot>& snaps) {
  std::ostringstream os;
  os << "iteration,domain,layer,bin_lo,bin_hi,count\n";
  char buf[256];
  for (const HistogramSnapshot& s : snaps) {
    const auto& h = s.histogram;
    const double width = (h.hi - h.lo) / static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%zu,%s,%zu,%.9g,%.9g,%zu\n", s.iteration,
                    to_string(s.domain), s.layer, h.lo + width * static_cast<double>(b),
                    h.lo + width * static_cast<double>(b + 1), h.counts[b]);
      os << buf;
    }
  }
  return os.str();
}

Adam::Adam(std::size_t size, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("Adam: parameter count changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

namespace {

// Epoch-wise shuffled minibatches over the training split.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }
  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  SplitMix64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

double test_accuracy(const NetworkSpec& net, const FilterBank& w, const DatasetHandle& data,
                     std::size_t samples) {
  const std::size_t n = samples == 0 ? data.test.size() : std::min(samples, data.test.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor logits = infer_spatial(net, w, data.images(data.test, idx));
  return accuracy(logits, data.labels(data.test, idx)).top1;
}

}  // namespace

TrainResult train(const NetworkSpec& net, const DatasetHandle& data, const TrainConfig& config,
                  const std::optional<FilterBank>& initial) {
  config.validate();
  if (data.train.height != net.input_h || data.train.width != net.input_w ||
      net.input_channels != 1) {
    throw ShapeError("dataset images are " + std::to_string(data.train.height) + "x" +
                     std::to_string(data.train.width) + " but " + net.name + " expects " +
                     std::to_string(net.input_channels) + "x" + std::to_string(net.input_h) +
                     "x" + std::to_string(net.input_w));
  }
  if (data.train.classes > net.num_classes()) {
    throw ShapeError("dataset has " + std::to_string(data.train.classes) + " classes but " +
                     net.name + " has " + std::to_string(net.num_classes()) + " outputs");
  }
  const SparsityConfig& sc = config.sparsity;
  const PlanSet plans = plans_for(net);
  const bool use_wd = sc.s_wd > 0.0;
  const bool use_sd = sc.s_sd > 0.0;

  TrainResult res;
  res.weights = initial ? *initial : init_filter_bank(net, config.seed);
  res.state.zeta_wd = res.state.zeta_sd = config.zeta0;

  LossGraph graph(net);
  BatchSampler sampler(data.train.size(), config.seed ^ 0xD1B54A32D192ED03ull);
  Adam weight_opt(res.weights.size(), config.beta1, config.beta2, config.epsilon);
  Adam zeta_opt(2, config.beta1, config.beta2, config.epsilon);

  FilterBank grad;
  std::vector<double> flat_grad(res.weights.size());
  const bool snapshots = config.histogram_every > 0 && config.histogram_layer < res.weights.count();

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    const std::vector<std::size_t> batch = sampler.next(config.batch_size);
    const Tensor images = data.images(data.train, batch);
    const Tensor labels = data.labels(data.train, batch);

    const double e = graph.loss_and_gradient(res.weights, images, labels, grad);
    if (!std::isfinite(e)) {
      throw TrainingDiverged("training diverged at iteration " + std::to_string(it) +
                             ": E = " + std::to_string(e));
    }

    double r_wd = 0.0, r_sd = 0.0;
    std::optional<RegularizerValue> wd, sd;
    if (use_wd) {
      wd = winograd_partial_l2(res.weights, plans, sc.s_wd, sc.scope);
      r_wd = wd->value;
      res.state.theta_wd = wd->thresholds.front();
    }
    if (use_sd) {
      sd = spatial_partial_l2(res.weights, sc.s_sd, sc.scope);
      r_sd = sd->value;
      res.state.theta_sd = sd->thresholds.front();
    }
    const JointCost jc =
        joint_cost(e, r_wd, r_sd, res.state.zeta_wd, res.state.zeta_sd, sc.alpha);

    const double c_wd = std::exp(res.state.zeta_wd), c_sd = std::exp(res.state.zeta_sd);
    std::size_t off = 0;
    for (std::size_t l = 0; l < grad.count(); ++l) {
      const auto ge = grad.tensors[l].data();
      for (std::size_t i = 0; i < ge.size(); ++i) {
        double g = ge[i];
        if (wd) g += c_wd * wd->gradient.tensors[l][i];
        if (sd) g += c_sd * sd->gradient.tensors[l][i];
        flat_grad[off + i] = g;
      }
      off += ge.size();
    }

    std::vector<double> flat = res.weights.flatten();
    weight_opt.step(flat, flat_grad, config.learning_rate);
    res.weights.assign(flat);
    double zetas[2] = {res.state.zeta_wd, res.state.zeta_sd};
    const double zeta_grad[2] = {jc.d_zeta_wd, jc.d_zeta_sd};
    zeta_opt.step(zetas, zeta_grad, config.zeta_learning_rate);
    res.state.zeta_wd = zetas[0];
    res.state.zeta_sd = zetas[1];
    res.state.iteration = it;

    const bool last = it == config.iterations;
    if (last || (config.log_every > 0 && it % config.log_every == 0)) {
      MetricsRow row;
      row.iteration = it;
      row.e = e;
      row.r_wd = r_wd;
      row.r_sd = r_sd;
      row.zeta_wd = res.state.zeta_wd;
      row.zeta_sd = res.state.zeta_sd;
      row.theta_wd = res.state.theta_wd;
      row.theta_sd = res.state.theta_sd;
      row.accuracy = test_accuracy(net, res.weights, data, config.eval_samples);
      res.metrics.push_back(row);
    }
    if (snapshots && (last || it % config.histogram_every == 0)) {
      res.histograms.push_back({it, Domain::spatial, config.histogram_layer,
                                snapshot_histogram(res.weights, plans, config.histogram_layer,
                                                   Domain::spatial, config.histogram_bins)});
      if (plans[config.histogram_layer]) {
        res.histograms.push_back(
            {it, Domain::winograd, config.histogram_layer,
             snapshot_histogram(res.weights, plans, config.histogram_layer, Domain::winograd,
                                config.histogram_bins)});
      }
    }
  }
  return res;
}

}  // namespace unisparse
