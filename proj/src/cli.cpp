#include "unisparse/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "unisparse/compression.hpp"
#include "unisparse/dataset.hpp"
#include "unisparse/deploy.hpp"
#include "unisparse/lzw.hpp"
#include "unisparse/pruning.hpp"

namespace unisparse {

// ------------------------------------------------------------- model files

namespace {

constexpr const char* kModelFormat = "unisparse-model/1";

// JSON has no infinities; an unset threshold is stored as null.
nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_or_minus_inf(const nlohmann::json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

nlohmann::json model_to_json(const ModelFile& model) {
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t l = 0; l < model.weights.count(); ++l) {
    const Tensor& t = model.weights.tensors[l];
    weights.push_back({{"layer", model.net.layers.at(model.weights.layers[l]).name},
                       {"shape", t.shape()},
                       {"values", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  return {{"format", kModelFormat},
          {"network", to_json(model.net)},
          {"weights", weights},
          {"train_state",
           {{"zeta_wd", model.state.zeta_wd},
            {"zeta_sd", model.state.zeta_sd},
            {"theta_wd", finite_or_null(model.state.theta_wd)},
            {"theta_sd", finite_or_null(model.state.theta_sd)},
            {"iteration", model.state.iteration}}}};
}

ModelFile model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) {
      throw ConfigError("unsupported model format '" + j.at("format").get<std::string>() +
                        "', expected " + kModelFormat);
    }
    ModelFile m;
    m.net = network_from_json(j.at("network"));
    const auto weighted = m.net.weighted_layers();
    const auto& ws = j.at("weights");
    if (ws.size() != weighted.size()) {
      throw ConfigError("model has " + std::to_string(ws.size()) + " weight tensors, network " +
                        m.net.name + " needs " + std::to_string(weighted.size()));
    }
    for (std::size_t l = 0; l < weighted.size(); ++l) {
      const LayerSpec& layer = m.net.layers[weighted[l]];
      Shape shape = ws[l].at("shape").get<Shape>();
      if (shape != layer.weight_shape()) {
        throw ConfigError("weights of " + layer.name + " have shape " + shape_to_string(shape) +
                          ", expected " + shape_to_string(layer.weight_shape()));
      }
      m.weights.tensors.emplace_back(std::move(shape), ws[l].at("values").get<std::vector<double>>());
      m.weights.layers.push_back(weighted[l]);
    }
    const auto& st = j.at("train_state");
    m.state.zeta_wd = st.at("zeta_wd").get<double>();
    m.state.zeta_sd = st.at("zeta_sd").get<double>();
    m.state.theta_wd = number_or_minus_inf(st.at("theta_wd"));
    m.state.theta_sd = number_or_minus_inf(st.at("theta_sd"));
    m.state.iteration = st.at("iteration").get<std::size_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelFile& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << model_to_json(model).dump() << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ------------------------------------------------------------- options

namespace {

struct Options {
  std::string dataset = "synthetic:10x5000x16:seed=7";
  std::string net = "tiny-cnn";
  std::string net_file;
  std::string model;
  std::string container;
  std::string out;
  std::string out_dir = ".";
  std::string metrics;
  std::string histograms;
  std::string report;
  std::string patterns;
  // Empty selects the subcommand default: both for macs, spatial otherwise.
  std::string domain;
  std::string policy = "all";
  std::string scope = "global";
  bool csv = false;

  double swd = 0.0;
  double ssd = 0.0;
  double alpha = 1.0;
  double lr = 1e-3;
  double zeta_lr = 1e-2;
  double zeta0 = std::log(1e-4);
  std::size_t batch = 32;
  std::size_t iterations = 20000;
  std::uint64_t seed = 1;
  std::size_t log_every = 100;
  std::size_t eval_samples = 0;
  std::size_t hist_every = 0;
  std::size_t hist_bins = 41;
  std::size_t hist_layer = 1;

  double sparsity = 70.0;
  double delta = 0.0;
  double target_sparsity = 70.0;
  std::uint64_t dither_seed = 1;
  std::size_t ft_steps = 0;
  double ft_lr = 1e-5;
  double ft_zeta_lr = 1e-5;
};

// Config-file keys, named like the long flags.
using Setter = std::function<void(Options&, const nlohmann::json&)>;

template <typename T>
Setter set(T Options::*field) {
  return [field](Options& o, const nlohmann::json& j) { o.*field = j.get<T>(); };
}

const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = {
      {"dataset", set(&Options::dataset)},
      {"net", set(&Options::net)},
      {"net-file", set(&Options::net_file)},
      {"model", set(&Options::model)},
      {"container", set(&Options::container)},
      {"out", set(&Options::out)},
      {"out-dir", set(&Options::out_dir)},
      {"metrics", set(&Options::metrics)},
      {"histograms", set(&Options::histograms)},
      {"report", set(&Options::report)},
      {"patterns", set(&Options::patterns)},
      {"domain", set(&Options::domain)},
      {"policy", set(&Options::policy)},
      {"scope", set(&Options::scope)},
      {"csv", set(&Options::csv)},
      {"swd", set(&Options::swd)},
      {"ssd", set(&Options::ssd)},
      {"alpha", set(&Options::alpha)},
      {"lr", set(&Options::lr)},
      {"zeta-lr", set(&Options::zeta_lr)},
      {"zeta0", set(&Options::zeta0)},
      {"batch", set(&Options::batch)},
      {"iterations", set(&Options::iterations)},
      {"seed", set(&Options::seed)},
      {"log-every", set(&Options::log_every)},
      {"eval-samples", set(&Options::eval_samples)},
      {"hist-every", set(&Options::hist_every)},
      {"hist-bins", set(&Options::hist_bins)},
      {"hist-layer", set(&Options::hist_layer)},
      {"sparsity", set(&Options::sparsity)},
      {"delta", set(&Options::delta)},
      {"target-sparsity", set(&Options::target_sparsity)},
      {"dither-seed", set(&Options::dither_seed)},
      {"ft-steps", set(&Options::ft_steps)},
      {"ft-lr", set(&Options::ft_lr)},
      {"ft-zeta-lr", set(&Options::ft_zeta_lr)},
  };
  return keys;
}

// Top-level keys apply to every subcommand; an object named after the
// subcommand overrides them.
void apply_config(Options& o, const std::string& path, const std::string& subcommand) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  static const std::set<std::string> subcommands = {"train", "prune",  "compress", "decompress",
                                                    "deploy", "eval", "macs",     "report"};
  auto apply = [&](const nlohmann::json& obj, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
      if (subcommands.count(key)) continue;
      auto it = config_keys().find(key);
      if (it == config_keys().end()) throw ConfigError(path + ": unknown key '" + where + key + "'");
      try {
        it->second(o, value);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": bad value for '" + where + key + "': " + e.what());
      }
    }
  };
  apply(j, "");
  if (j.contains(subcommand)) {
    if (!j[subcommand].is_object()) throw ConfigError(path + ": '" + subcommand + "' must be an object");
    apply(j[subcommand], subcommand + ".");
  }
  for (const auto& [key, value] : j.items()) {
    if (subcommands.count(key) && !value.is_object()) {
      throw ConfigError(path + ": '" + key + "' must be an object");
    }
  }
}

// Finds --config before CLI11 parses, so the file can seed the defaults
// that flags then override.
std::string find_config(const std::vector<std::string>& argv) {
  for (std::size_t i = 1; i < argv.size(); ++i) {
    if (argv[i] == "--config") {
      if (i + 1 >= argv.size()) throw ConfigError("--config needs a path");
      return argv[i + 1];
    }
    if (argv[i].rfind("--config=", 0) == 0) return argv[i].substr(9);
  }
  return {};
}

std::string find_subcommand(const std::vector<std::string>& argv) {
  static const std::set<std::string> names = {"train",  "prune", "compress", "decompress",
                                              "deploy", "eval",  "macs",     "report"};
  for (std::size_t i = 1; i < argv.size(); ++i)
    if (names.count(argv[i])) return argv[i];
  return {};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << text;
  if (!out) throw std::runtime_error(path + ": write failed");
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string percent(double fraction) { return fmt("%.2f%%", 100.0 * fraction); }

NetworkSpec network_for_dataset(const Options& o, const DatasetHandle& data) {
  if (!o.net_file.empty()) {
    std::ifstream in(o.net_file);
    if (!in) throw std::runtime_error(o.net_file + ": cannot open");
    try {
      NetworkSpec net = network_from_json(nlohmann::json::parse(in));
      require_executable(net);
      return net;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(o.net_file + ": " + e.what());
    }
  }
  if (o.net != "tiny-cnn") {
    throw ConfigError("network '" + o.net +
                      "' is descriptor-only; train supports tiny-cnn or --net-file");
  }
  return tiny_cnn(data.train.height, data.train.classes);
}

// ------------------------------------------------------------- subcommands

int cmd_train(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw ConfigError("train needs --out <model.json>");
  const DatasetHandle data = ingest_dataset(o.dataset);
  const NetworkSpec net = network_for_dataset(o, data);
  TrainConfig c;
  c.learning_rate = o.lr;
  c.zeta_learning_rate = o.zeta_lr;
  c.batch_size = o.batch;
  c.iterations = o.iterations;
  c.zeta0 = o.zeta0;
  c.seed = o.seed;
  c.log_every = o.log_every;
  c.eval_samples = o.eval_samples;
  c.histogram_every = o.hist_every;
  c.histogram_bins = o.hist_bins;
  c.histogram_layer = o.hist_layer;
  c.sparsity.s_wd = o.swd;
  c.sparsity.s_sd = o.ssd;
  c.sparsity.alpha = o.alpha;
  c.sparsity.scope = parse_scope(o.scope);
  c.validate();

  const TrainResult r = train(net, data, c);
  save_model(o.out, {net, r.weights, r.state});
  if (!o.metrics.empty()) write_text(o.metrics, metrics_csv(r.metrics));
  if (!o.histograms.empty()) write_text(o.histograms, histograms_csv(r.histograms));

  const Evaluation ev = evaluate(deploy_spatial(net, r.weights), data, data.test);
  out << "trained " << net.name << " for " << r.state.iteration << " iterations (seed " << o.seed
      << ", s_WD " << o.swd << "%, s_SD " << o.ssd << "%, alpha " << o.alpha << ")\n"
      << "zeta_WD " << fmt("%.4f", r.state.zeta_wd) << "  zeta_SD "
      << fmt("%.4f", r.state.zeta_sd) << "\n"
      << "test top-1 " << percent(ev.accuracy.top1) << "  top-5 " << percent(ev.accuracy.top5)
      << "\nmodel written to " << o.out << "\n";
  return 0;
}

int cmd_prune(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw ConfigError("prune needs --model");
  const Domain domain = parse_domain(o.domain.empty() ? "spatial" : o.domain);
  const ThresholdScope scope = parse_scope(o.scope);
  if (!(o.sparsity >= 0.0 && o.sparsity <= 100.0)) throw ConfigError("--sparsity must be in [0, 100]");
  if (domain == Domain::winograd && !o.out.empty()) {
    throw ConfigError("winograd pruning is terminal for a deployment; --out applies to the spatial domain only");
  }
  const ModelFile m = load_model(o.model);
  const PlanSet plans = plans_for(m.net);
  const PruneResult r = prune(m.weights, plans, domain, o.sparsity, scope);
  const SparsityReport rep = domain == Domain::spatial
                                 ? sparsity_report(m.net, r.spatial, o.sparsity)
                                 : sparsity_report(m.net, r.spatial, r.winograd, o.sparsity);
  if (!o.report.empty()) write_text(o.report, rep.to_csv());
  else out << rep.to_csv();
  if (!o.patterns.empty()) {
    std::ostringstream dump;
    for (std::size_t l = 0; l < r.spatial.count(); ++l) {
      const Tensor* t = nullptr;
      if (domain == Domain::winograd && r.winograd[l]) t = &r.winograd[l]->weights;
      if (domain == Domain::spatial && r.spatial.tensors[l].rank() == 4) t = &r.spatial.tensors[l];
      if (!t) continue;
      dump << "# " << m.net.layers[r.spatial.layers[l]].name << " (" << to_string(domain) << ")\n"
           << pattern_dump(*t);
    }
    write_text(o.patterns, dump.str());
  }
  if (!o.out.empty()) save_model(o.out, {m.net, r.spatial, m.state});
  out << "pruned " << r.mask.pruned << " of " << r.mask.total << " " << to_string(domain)
      << " weights (" << percent(r.mask.achieved()) << ", target " << o.sparsity << "%)\n";
  const DatasetHandle data = ingest_dataset(o.dataset);
  const DeployedModel dm = domain == Domain::spatial
                               ? deploy_spatial(m.net, r.spatial)
                               : deploy_winograd(m.net, m.weights, o.sparsity, scope);
  const Evaluation ev = evaluate(dm, data, data.test);
  out << "test top-1 " << percent(ev.accuracy.top1) << "  top-5 " << percent(ev.accuracy.top5) << "\n";
  return 0;
}

void print_container_stats(const ContainerStats& st, const QuantizationRecord& rec, std::ostream& out) {
  out << "weights " << st.weights << ", pruned " << rec.pruned_count() << " ("
      << fmt("%.2f%%", rec.sparsity()) << "), " << rec.codebook.entries.size()
      << " distinct levels, delta " << fmt("%.6g", rec.delta) << ", seed " << rec.seed << "\n"
      << "sections: spec " << st.section_bytes[container::spec] << " B, bitmap "
      << st.section_bytes[container::bitmap] << " B, levels " << st.section_bytes[container::levels]
      << " B, codebook " << st.section_bytes[container::codebook] << " B, header "
      << container::kHeaderSize << " B\n"
      << "dense " << st.dense_bytes << " B -> container " << st.container_bytes << " B\n"
      << "compression ratio " << fmt("%.2f", st.ratio()) << "x with overhead, "
      << fmt("%.2f", st.payload_ratio()) << "x payload only\n";
}

int cmd_compress(const Options& o, std::ostream& out) {
  if (o.model.empty() || o.out.empty()) throw ConfigError("compress needs --model and --out");
  if (o.delta < 0.0) throw ConfigError("--delta must be positive");
  const ModelFile m = load_model(o.model);
  const std::vector<double> flat = m.weights.flatten();
  const double delta = o.delta > 0.0 ? o.delta : search_delta(flat, o.target_sparsity, o.dither_seed);
  CompressedModel cm = compress(m.net, m.weights, delta, o.dither_seed);
  if (o.ft_steps > 0) {
    const DatasetHandle data = ingest_dataset(o.dataset);
    FineTuneConfig fc;
    fc.steps = o.ft_steps;
    fc.learning_rate = o.ft_lr;
    fc.zeta_learning_rate = o.ft_zeta_lr;
    fc.batch_size = o.batch;
    fc.s_wd = o.swd;
    fc.alpha = o.alpha;
    fc.zeta_wd = m.state.zeta_wd;
    fc.seed = o.seed;
    const FineTuneResult ft = fine_tune_codebook(cm.record, m.net, data, fc);
    cm.record = ft.record;
    out << "fine-tuned codebook for " << o.ft_steps << " steps: C " << fmt("%.6g", ft.cost.front())
        << " -> " << fmt("%.6g", ft.cost.back()) << ", zeta_WD " << fmt("%.4f", ft.zeta_wd) << "\n";
  }
  const auto bytes = write_container(cm);
  write_file(o.out, bytes);
  print_container_stats(container_stats(bytes), cm.record, out);
  return 0;
}

int cmd_decompress(const Options& o, std::ostream& out) {
  if (o.container.empty() || o.out.empty()) throw ConfigError("decompress needs --container and --out");
  const auto bytes = read_file(o.container);
  const CompressedModel cm = read_container(bytes);
  TrainState state;
  save_model(o.out, {cm.net, reconstruct(cm), state});
  print_container_stats(container_stats(bytes), cm.record, out);
  out << "dither-cancelled weights written to " << o.out << "\n";
  return 0;
}

void print_evaluation(const DeployedModel& m, const Evaluation& ev, const Options& o, std::ostream& out) {
  out << to_string(m.domain) << " deployment of " << m.net.name << ": sparsity "
      << percent(m.sparsity.overall.ratio()) << " (" << m.sparsity.overall.zeros << "/"
      << m.sparsity.overall.total << ")\n"
      << "top-1 " << percent(ev.accuracy.top1) << "  top-5 " << percent(ev.accuracy.top5) << " on "
      << ev.accuracy.samples << " test samples\n"
      << "measured MACs per image " << ev.total_macs << "\n"
      << m.macs.to_text();
  if (!o.report.empty()) write_text(o.report, evaluation_csv(m, ev));
}

DeployedModel deploy_from(const FilterBank& weights, const NetworkSpec& net, const Options& o) {
  const Domain domain = parse_domain(o.domain.empty() ? "spatial" : o.domain);
  return domain == Domain::spatial ? deploy_spatial(net, weights)
                                   : deploy_winograd(net, weights, o.swd, parse_scope(o.scope));
}

int cmd_deploy(const Options& o, std::ostream& out) {
  if (o.container.empty()) throw ConfigError("deploy needs --container");
  const Domain domain = parse_domain(o.domain.empty() ? "spatial" : o.domain);
  const ThresholdScope scope = parse_scope(o.scope);
  const auto bytes = read_file(o.container);
  const DeployedModel m = domain == Domain::spatial ? deploy_spatial(bytes) : deploy_winograd(bytes, o.swd, scope);
  const DatasetHandle data = ingest_dataset(o.dataset);
  print_evaluation(m, evaluate(m, data, data.test), o, out);
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw ConfigError("eval needs --model");
  const ModelFile mf = load_model(o.model);
  const DeployedModel m = deploy_from(mf.weights, mf.net, o);
  const DatasetHandle data = ingest_dataset(o.dataset);
  print_evaluation(m, evaluate(m, data, data.test), o, out);
  return 0;
}

struct Reference {
  double spatial_m;
  double winograd_m;
};

// Published dense per-image MAC totals, in millions.
const std::map<std::string, Reference>& references() {
  static const std::map<std::string, Reference> refs = {
      {"resnet18-modified", {2347.1, 1174.0}},
      {"alexnet", {724.4, 330.0}},
  };
  return refs;
}

int cmd_macs(const Options& o, std::ostream& out) {
  NetworkSpec net;
  if (!o.net_file.empty()) {
    std::ifstream in(o.net_file);
    if (!in) throw std::runtime_error(o.net_file + ": cannot open");
    try {
      net = network_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(o.net_file + ": " + e.what());
    }
  } else {
    try {
      net = builtin_network(o.net);
    } catch (const SpecError& e) {
      throw ConfigError(e.what());
    }
  }
  const MacDomain domain = parse_mac_domain(o.domain.empty() ? "both" : o.domain);
  std::vector<CountingPolicy> policies;
  if (o.policy == "all") policies = {CountingPolicy::elementwise_only, CountingPolicy::full};
  else policies = {parse_policy(o.policy)};

  const auto ref = references().find(net.name);
  for (CountingPolicy policy : policies) {
    const MacReport rep = count_macs(net, domain, {}, policy);
    out << (o.csv ? rep.to_csv() : rep.to_text());
    if (ref == references().end()) continue;
    auto gap = [&](const char* what, double measured, double reference) {
      const double m = measured / 1e6;
      const double rel = (m - reference) / reference;
      out << "  " << what << ": " << fmt("%.1fM", m) << " vs reference " << fmt("%.1fM", reference)
          << ", residual " << fmt("%+.1fM", m - reference) << " (" << fmt("%+.2f%%", 100 * rel)
          << "), policy " << to_string(policy) << ", within 5%: " << (std::fabs(rel) <= 0.05 ? "yes" : "no")
          << "\n";
    };
    if (rep.spatial) gap("spatial", static_cast<double>(rep.total_spatial_dense()), ref->second.spatial_m);
    if (rep.winograd) gap("winograd", static_cast<double>(rep.total_winograd_dense()), ref->second.winograd_m);
  }
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.model.empty()) throw ConfigError("report needs --model");
  const ModelFile m = load_model(o.model);
  const PlanSet plans = plans_for(m.net);
  const ThresholdScope scope = parse_scope(o.scope);
  std::filesystem::create_directories(o.out_dir);
  const std::filesystem::path dir(o.out_dir);

  std::vector<HistogramSnapshot> snaps;
  for (std::size_t l = 0; l < m.weights.count(); ++l) {
    snaps.push_back({m.state.iteration, Domain::spatial, l,
                     snapshot_histogram(m.weights, plans, l, Domain::spatial, o.hist_bins)});
    if (plans[l]) {
      snaps.push_back({m.state.iteration, Domain::winograd, l,
                       snapshot_histogram(m.weights, plans, l, Domain::winograd, o.hist_bins)});
    }
  }
  write_text((dir / "histograms.csv").string(), histograms_csv(snaps));

  const PruneResult sp = prune_spatial(m.weights, o.ssd, scope);
  write_text((dir / "sparsity_spatial.csv").string(), sparsity_report(m.net, sp.spatial, o.ssd).to_csv());
  std::ostringstream patterns;
  for (std::size_t l = 0; l < m.weights.count(); ++l) {
    if (sp.spatial.tensors[l].rank() != 4) continue;
    patterns << "# " << m.net.layers[m.weights.layers[l]].name << " spatial, s=" << o.ssd << "%\n"
             << pattern_dump(sp.spatial.tensors[l]);
  }
  DeployedModel spatial_dm = deploy_spatial(m.net, sp.spatial);
  std::string macs_csv = spatial_dm.macs.to_csv();
  if (m.net.has_winograd_layers()) {
    const PruneResult wp = prune_winograd(m.weights, plans, o.swd, scope);
    write_text((dir / "sparsity_winograd.csv").string(),
               sparsity_report(m.net, m.weights, wp.winograd, o.swd).to_csv());
    for (std::size_t l = 0; l < wp.winograd.size(); ++l) {
      if (!wp.winograd[l]) continue;
      patterns << "# " << m.net.layers[m.weights.layers[l]].name << " winograd, s=" << o.swd << "%\n"
               << pattern_dump(wp.winograd[l]->weights);
    }
    macs_csv = deploy_winograd(m.net, m.weights, o.swd, scope).macs.to_csv();
  }
  write_text((dir / "patterns.txt").string(), patterns.str());
  write_text((dir / "macs.csv").string(), macs_csv);
  out << "wrote histograms.csv, sparsity_spatial.csv"
      << (m.net.has_winograd_layers() ? ", sparsity_winograd.csv" : "")
      << ", patterns.txt and macs.csv to " << o.out_dir << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Joint spatial/Winograd sparse CNN training, pruning, compression and deployment",
               "unisparse"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  auto dataset = [&](CLI::App* s) {
    s->add_option("--dataset", o.dataset, "synthetic:<classes>x<samples>x<side>[:seed=n] or <images.idx>,<labels.idx>");
  };
  auto sparsity = [&](CLI::App* s) {
    s->add_option("--swd", o.swd, "Winograd-domain target sparsity in percent");
    s->add_option("--scope", o.scope, "Threshold scope: global or per-layer");
  };

  CLI::App* train = app.add_subcommand("train", "Train tiny-cnn under the joint sparsity cost");
  dataset(train);
  sparsity(train);
  train->add_option("--net", o.net, "Network (tiny-cnn)");
  train->add_option("--net-file", o.net_file, "Network descriptor JSON");
  train->add_option("--ssd", o.ssd, "Spatial-domain target sparsity in percent");
  train->add_option("--alpha", o.alpha, "Penalty strength on the log-coefficients");
  train->add_option("--lr", o.lr, "Adam step size for the weights");
  train->add_option("--zeta-lr", o.zeta_lr, "Adam step size for zeta_WD and zeta_SD");
  train->add_option("--zeta0", o.zeta0, "Initial log-coefficient");
  train->add_option("--batch", o.batch, "Minibatch size");
  train->add_option("--iterations", o.iterations, "Iteration budget");
  train->add_option("--seed", o.seed, "Seed for initialization and batch order");
  train->add_option("--log-every", o.log_every, "Metrics cadence in iterations");
  train->add_option("--eval-samples", o.eval_samples, "Test samples scored per metrics row (0 = all)");
  train->add_option("--hist-every", o.hist_every, "Histogram cadence in iterations (0 = off)");
  train->add_option("--hist-bins", o.hist_bins, "Histogram bins");
  train->add_option("--hist-layer", o.hist_layer, "Weighted-layer index to histogram");
  train->add_option("--out", o.out, "Model file to write");
  train->add_option("--metrics", o.metrics, "Metrics CSV to write");
  train->add_option("--histograms", o.histograms, "Histogram CSV to write");

  CLI::App* prune_cmd = app.add_subcommand("prune", "Magnitude-prune a model in one domain");
  prune_cmd->add_option("--model", o.model, "Model file");
  prune_cmd->add_option("--domain", o.domain, "spatial or winograd");
  prune_cmd->add_option("--sparsity", o.sparsity, "Target sparsity in percent");
  prune_cmd->add_option("--scope", o.scope, "Threshold scope: global or per-layer");
  prune_cmd->add_option("--out", o.out, "Pruned model file (spatial domain)");
  prune_cmd->add_option("--report", o.report, "Sparsity CSV (default: stdout)");
  prune_cmd->add_option("--patterns", o.patterns, "Zero-pattern text dump");
  prune_cmd->add_option("--dataset", o.dataset, "Dataset to score the pruned model on");

  CLI::App* compress_cmd = app.add_subcommand("compress", "Quantize and entropy-code a model");
  dataset(compress_cmd);
  compress_cmd->add_option("--model", o.model, "Model file");
  compress_cmd->add_option("--out", o.out, "Container to write");
  compress_cmd->add_option("--delta", o.delta, "Quantization step (0 = search)");
  compress_cmd->add_option("--target-sparsity", o.target_sparsity, "Spatial sparsity the delta search aims for");
  compress_cmd->add_option("--dither-seed", o.dither_seed, "Dither seed");
  compress_cmd->add_option("--ft-steps", o.ft_steps, "Codebook fine-tuning steps (0 = none)");
  compress_cmd->add_option("--ft-lr", o.ft_lr, "Codebook step size");
  compress_cmd->add_option("--ft-zeta-lr", o.ft_zeta_lr, "zeta_WD step size while fine-tuning");
  compress_cmd->add_option("--swd", o.swd, "Winograd-domain target sparsity for fine-tuning");
  compress_cmd->add_option("--alpha", o.alpha, "Penalty strength while fine-tuning");
  compress_cmd->add_option("--batch", o.batch, "Fine-tuning minibatch size");
  compress_cmd->add_option("--seed", o.seed, "Fine-tuning batch seed");

  CLI::App* decompress_cmd = app.add_subcommand("decompress", "Decode a container to a model file");
  decompress_cmd->add_option("--container", o.container, "Container file");
  decompress_cmd->add_option("--out", o.out, "Model file to write");

  CLI::App* deploy_cmd = app.add_subcommand("deploy", "Deploy a container in one domain and evaluate it");
  dataset(deploy_cmd);
  sparsity(deploy_cmd);
  deploy_cmd->add_option("--container", o.container, "Container file");
  deploy_cmd->add_option("--domain", o.domain, "spatial or winograd");
  deploy_cmd->add_option("--report", o.report, "Evaluation CSV to write");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model file in one domain");
  dataset(eval_cmd);
  sparsity(eval_cmd);
  eval_cmd->add_option("--model", o.model, "Model file");
  eval_cmd->add_option("--domain", o.domain, "spatial or winograd");
  eval_cmd->add_option("--report", o.report, "Evaluation CSV to write");

  CLI::App* macs_cmd = app.add_subcommand("macs", "Dense per-image MAC counts of a network");
  macs_cmd->add_option("--net", o.net, "tiny-cnn, resnet18-modified or alexnet");
  macs_cmd->add_option("--net-file", o.net_file, "Network descriptor JSON");
  macs_cmd->add_option("--domain", o.domain, "spatial, winograd or both");
  macs_cmd->add_option("--policy", o.policy, "elementwise-only, full or all");
  macs_cmd->add_flag("--csv", o.csv, "CSV instead of aligned text");

  CLI::App* report_cmd = app.add_subcommand("report", "Histograms, sparsity tables and zero patterns");
  report_cmd->add_option("--model", o.model, "Model file");
  report_cmd->add_option("--out-dir", o.out_dir, "Output directory");
  report_cmd->add_option("--swd", o.swd, "Winograd-domain pruning sparsity for the patterns");
  report_cmd->add_option("--ssd", o.ssd, "Spatial-domain pruning sparsity for the patterns");
  report_cmd->add_option("--scope", o.scope, "Threshold scope: global or per-layer");
  report_cmd->add_option("--hist-bins", o.hist_bins, "Histogram bins");

  // Config values become the defaults that flags override.
  try {
    const std::string path = find_config(argv);
    if (!path.empty()) apply_config(o, path, find_subcommand(argv));
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  std::vector<std::string> args(argv.rbegin(), argv.rend() - 1);  // CLI11 wants reversed args
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*prune_cmd) return cmd_prune(o, out);
    if (*compress_cmd) return cmd_compress(o, out);
    if (*decompress_cmd) return cmd_decompress(o, out);
    if (*deploy_cmd) return cmd_deploy(o, out);
    if (*eval_cmd) return cmd_eval(o, out);
    if (*macs_cmd) return cmd_macs(o, out);
    if (*report_cmd) return cmd_report(o, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace unisparse
