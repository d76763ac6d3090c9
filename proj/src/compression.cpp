#include "unisparse/compression.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "unisparse/lzw.hpp"
#include "unisparse/rng.hpp"
#include "unisparse/sparsity.hpp"

namespace unisparse {

std::vector<double> dither_sequence(std::size_t count, double delta, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<double> u(count);
  for (double& v : u) v = delta * (rng.uniform() - 0.5);
  return u;
}

namespace {

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u32(std::vector<std::uint8_t>& out, std::size_t at, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out[at + b] = static_cast<std::uint8_t>(v >> (8 * b));
}
void put_u64(std::vector<std::uint8_t>& out, std::size_t at, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out[at + b] = static_cast<std::uint8_t>(v >> (8 * b));
}
void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= std::uint32_t{in[at + b]} << (8 * b);
  return v;
}
std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= std::uint64_t{in[at + b]} << (8 * b);
  return v;
}

}  // namespace

std::uint32_t dither_fingerprint(std::size_t count, double delta, std::uint64_t seed) {
  const auto u = dither_sequence(std::min<std::size_t>(count, 64), delta, seed);
  std::vector<std::uint8_t> bytes;
  for (double v : u) append_u64(bytes, std::bit_cast<std::uint64_t>(v));
  return crc32_of(bytes);
}

Codebook Codebook::uniform(std::span<const std::int64_t> levels, double delta) {
  std::vector<std::int64_t> distinct;
  for (std::int64_t k : levels)
    if (k != 0) distinct.push_back(k);
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  Codebook cb;
  for (std::int64_t k : distinct) cb.entries.emplace_back(k, delta * static_cast<double>(k));
  return cb;
}

std::size_t Codebook::index(std::int64_t level) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), level,
                             [](const auto& e, std::int64_t k) { return e.first < k; });
  if (it == entries.end() || it->first != level) {
    throw std::out_of_range("codebook has no entry for level " + std::to_string(level));
  }
  return static_cast<std::size_t>(it - entries.begin());
}

double Codebook::value(std::int64_t level) const {
  return level == 0 ? 0.0 : entries[index(level)].second;
}

std::size_t QuantizationRecord::pruned_count() const {
  return static_cast<std::size_t>(std::count(levels.begin(), levels.end(), 0));
}

double QuantizationRecord::sparsity() const {
  return levels.empty() ? 0.0
                        : 100.0 * static_cast<double>(pruned_count()) /
                              static_cast<double>(levels.size());
}

std::vector<double> QuantizationRecord::quantized() const {
  std::vector<double> q(levels.size());
  for (std::size_t i = 0; i < levels.size(); ++i) q[i] = codebook.value(levels[i]);
  return q;
}

std::int64_t quantize_level(double a, double u, double delta) {
  return static_cast<std::int64_t>(std::round((a + u) / delta));
}

QuantizationRecord dithered_quantize(std::span<const double> weights, double delta,
                                     std::uint64_t seed) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("quantization step must be positive and finite");
  }
  QuantizationRecord rec;
  rec.delta = delta;
  rec.seed = seed;
  rec.levels.resize(weights.size());
  const auto u = dither_sequence(weights.size(), delta, seed);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    rec.levels[i] = quantize_level(weights[i], u[i], delta);
  }
  rec.codebook = Codebook::uniform(rec.levels, delta);
  rec.fingerprint = dither_fingerprint(weights.size(), delta, seed);
  return rec;
}

std::vector<double> dither_cancel(const QuantizationRecord& record) {
  if (dither_fingerprint(record.size(), record.delta, record.seed) != record.fingerprint) {
    throw std::runtime_error("dither seed does not match the quantization record");
  }
  const auto u = dither_sequence(record.size(), record.delta, record.seed);
  std::vector<double> out(record.size(), 0.0);
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (record.levels[i] != 0) out[i] = record.codebook.value(record.levels[i]) - u[i];
  }
  return out;
}

double search_delta(std::span<const double> weights, double target_percent, std::uint64_t seed) {
  if (weights.empty()) throw std::invalid_argument("search_delta: no weights");
  if (!(target_percent >= 0.0 && target_percent <= 100.0)) {
    throw std::invalid_argument("search_delta: target must be in [0, 100]");
  }
  const double m = max_abs(Tensor({weights.size()}, {weights.begin(), weights.end()}));
  if (m == 0.0) return 1.0;
  auto reaches = [&](double delta) {
    return dithered_quantize(weights, delta, seed).sparsity() >= target_percent;
  };
  double lo = m * 1e-12, hi = 4.0 * m;
  while (!reaches(hi)) {
    hi *= 2.0;
    if (hi > m * 1e12) throw std::runtime_error("search_delta: target sparsity unreachable");
  }
  if (reaches(lo)) return lo;
  for (int i = 0; i < 60; ++i) {
    const double mid = std::sqrt(lo * hi);
    (reaches(mid) ? hi : lo) = mid;
  }
  return hi;
}

FineTuneResult fine_tune_codebook(const QuantizationRecord& record, const NetworkSpec& net,
                                  const DatasetHandle& data, const FineTuneConfig& config) {
  if (config.batch_size == 0) throw std::invalid_argument("fine-tune batch size must be positive");
  FineTuneResult res;
  res.record = record;
  res.record.fine_tuned = true;
  res.zeta_wd = config.zeta_wd;

  FilterBank w = init_filter_bank(net, 0);
  if (w.size() != record.size()) {
    throw std::invalid_argument("fine-tune: record has " + std::to_string(record.size()) +
                                " weights, network has " + std::to_string(w.size()));
  }
  const PlanSet plans = plans_for(net);
  const auto dither = dither_sequence(record.size(), record.delta, record.seed);
  std::vector<std::size_t> member(record.size(), 0);
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (record.levels[i] != 0) member[i] = record.codebook.index(record.levels[i]);
  }

  LossGraph graph(net);
  SplitMix64 rng(config.seed);
  FilterBank grad;
  std::vector<double> flat(record.size());
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (std::size_t i = 0; i < record.size(); ++i) {
      flat[i] = record.levels[i] == 0
                    ? 0.0
                    : res.record.codebook.entries[member[i]].second - dither[i];
    }
    w.assign(flat);
    std::vector<std::size_t> batch(config.batch_size);
    for (auto& b : batch) b = static_cast<std::size_t>(rng.below(data.train.size()));
    const double e = graph.loss_and_gradient(w, data.images(data.train, batch),
                                             data.labels(data.train, batch), grad);
    double r_wd = 0.0;
    std::vector<double> g = grad.flatten();
    const double coeff = std::exp(res.zeta_wd);
    if (config.s_wd > 0.0) {
      const RegularizerValue wd = winograd_partial_l2(w, plans, config.s_wd);
      r_wd = wd.value;
      const std::vector<double> gr = wd.gradient.flatten();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += coeff * gr[i];
    }
    res.cost.push_back(e + coeff * r_wd - config.alpha * res.zeta_wd);

    descend_codebook(res.record.codebook, record.levels, g, config.learning_rate);
    res.zeta_wd -= config.zeta_learning_rate * (coeff * r_wd - config.alpha);
  }
  return res;
}

void descend_codebook(Codebook& codebook, std::span<const std::int64_t> levels,
                      std::span<const double> grad, double learning_rate) {
  if (grad.size() != levels.size()) {
    throw std::invalid_argument("descend_codebook: gradient and level counts differ");
  }
  std::vector<double> sums(codebook.entries.size(), 0.0);
  std::vector<std::size_t> counts(codebook.entries.size(), 0);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == 0) continue;
    const std::size_t k = codebook.index(levels[i]);
    sums[k] += grad[i];
    ++counts[k];
  }
  for (std::size_t k = 0; k < sums.size(); ++k) {
    if (counts[k] > 0) {
      codebook.entries[k].second -= learning_rate * sums[k] / static_cast<double>(counts[k]);
    }
  }
}

// ------------------------------------------------------------- container

double ContainerStats::ratio() const {
  return static_cast<double>(dense_bytes) / static_cast<double>(container_bytes);
}

double ContainerStats::payload_ratio() const {
  return static_cast<double>(dense_bytes) / static_cast<double>(payload_bytes);
}

std::vector<std::uint8_t> write_container(const CompressedModel& model) {
  const QuantizationRecord& rec = model.record;
  std::vector<std::uint8_t> sections[container::section_count];

  const std::string spec = to_json(model.net).dump();
  sections[container::spec].assign(spec.begin(), spec.end());

  std::vector<std::uint8_t> bitmap((rec.size() + 7) / 8, 0);
  std::vector<std::int64_t> kept;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    if (rec.levels[i] == 0) bitmap[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    else kept.push_back(rec.levels[i]);
  }
  sections[container::bitmap] = lzw_encode(bitmap);
  sections[container::levels] = entropy_encode(kept);

  if (rec.fine_tuned) {
    auto& cb = sections[container::codebook];
    cb.resize(4);
    put_u32(cb, 0, static_cast<std::uint32_t>(rec.codebook.entries.size()));
    for (const auto& [level, value] : rec.codebook.entries) {
      append_u64(cb, static_cast<std::uint64_t>(level));
      append_u64(cb, std::bit_cast<std::uint64_t>(value));
    }
  }

  std::vector<std::uint8_t> out(container::kHeaderSize, 0);
  std::memcpy(out.data(), container::kMagic, 8);
  put_u64(out, 8, std::bit_cast<std::uint64_t>(rec.delta));
  put_u64(out, 16, rec.seed);
  put_u64(out, 24, rec.size());
  put_u32(out, 32, rec.fine_tuned ? container::kFlagFineTuned : 0u);
  put_u32(out, 36, rec.fingerprint);
  for (int s = 0; s < container::section_count; ++s) {
    put_u64(out, 48 + 16 * s, out.size());
    put_u64(out, 56 + 16 * s, sections[s].size());
    out.insert(out.end(), sections[s].begin(), sections[s].end());
  }
  put_u32(out, 40, crc32_of(out));
  return out;
}

namespace {

struct Header {
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
  std::uint32_t flags = 0;
  std::uint32_t fingerprint = 0;
  std::uint64_t offset[container::section_count] = {};
  std::uint64_t length[container::section_count] = {};
};

Header read_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < container::kHeaderSize) {
    throw ContainerError("container truncated: " + std::to_string(bytes.size()) +
                         " bytes, header needs " + std::to_string(container::kHeaderSize));
  }
  if (std::memcmp(bytes.data(), container::kMagic, 4) != 0) {
    throw ContainerError("not a WSPC container (bad magic)");
  }
  if (std::memcmp(bytes.data(), container::kMagic, 8) != 0) {
    throw ContainerError("unsupported container version '" +
                         std::string(reinterpret_cast<const char*>(bytes.data()) + 4, 4) +
                         "', expected 0001");
  }
  std::vector<std::uint8_t> copy(bytes.begin(), bytes.end());
  put_u32(copy, 40, 0);
  const std::uint32_t stored = get_u32(bytes, 40);
  if (crc32_of(copy) != stored) throw ContainerError("container checksum mismatch");

  Header h;
  h.delta = std::bit_cast<double>(get_u64(bytes, 8));
  h.seed = get_u64(bytes, 16);
  h.count = get_u64(bytes, 24);
  h.flags = get_u32(bytes, 32);
  h.fingerprint = get_u32(bytes, 36);
  for (int s = 0; s < container::section_count; ++s) {
    h.offset[s] = get_u64(bytes, 48 + 16 * s);
    h.length[s] = get_u64(bytes, 56 + 16 * s);
    if (h.offset[s] < container::kHeaderSize || h.offset[s] > bytes.size() ||
        h.length[s] > bytes.size() - h.offset[s]) {
      throw ContainerError("section " + std::to_string(s) + " lies outside the container");
    }
  }
  return h;
}

}  // namespace

ContainerStats container_stats(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes);
  ContainerStats st;
  st.weights = h.count;
  st.dense_bytes = h.count * sizeof(double);
  st.container_bytes = bytes.size();
  for (int s = 0; s < container::section_count; ++s) st.section_bytes[s] = h.length[s];
  st.payload_bytes = h.length[container::bitmap] + h.length[container::levels] +
                     h.length[container::codebook];
  return st;
}

CompressedModel read_container(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes);
  auto section = [&](int s) { return bytes.subspan(h.offset[s], h.length[s]); };

  CompressedModel model;
  try {
    const auto spec = section(container::spec);
    model.net = network_from_json(nlohmann::json::parse(spec.begin(), spec.end()));
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError(std::string("container network section: ") + e.what());
  }

  QuantizationRecord& rec = model.record;
  rec.delta = h.delta;
  rec.seed = h.seed;
  rec.fingerprint = h.fingerprint;
  rec.fine_tuned = (h.flags & container::kFlagFineTuned) != 0;
  if (!(rec.delta > 0.0)) throw ContainerError("container has a non-positive quantization step");

  const auto bitmap = lzw_decode(section(container::bitmap));
  if (bitmap.size() != (h.count + 7) / 8) {
    throw ContainerError("pruned bitmap holds " + std::to_string(bitmap.size()) +
                         " bytes for " + std::to_string(h.count) + " weights");
  }
  const auto kept = entropy_decode(section(container::levels));
  rec.levels.assign(h.count, 0);
  std::size_t next = 0;
  for (std::size_t i = 0; i < h.count; ++i) {
    if (bitmap[i / 8] >> (i % 8) & 1u) continue;
    if (next == kept.size()) throw ContainerError("level stream shorter than the bitmap implies");
    rec.levels[i] = kept[next++];
    if (rec.levels[i] == 0) throw ContainerError("unpruned weight " + std::to_string(i) + " has level 0");
  }
  if (next != kept.size()) throw ContainerError("level stream longer than the bitmap implies");

  if (rec.fine_tuned) {
    const auto cb = section(container::codebook);
    if (cb.size() < 4) throw ContainerError("codebook section truncated");
    const std::uint32_t n = get_u32(cb, 0);
    if (cb.size() != 4 + std::size_t{n} * 16) throw ContainerError("codebook section size mismatch");
    for (std::uint32_t k = 0; k < n; ++k) {
      rec.codebook.entries.emplace_back(static_cast<std::int64_t>(get_u64(cb, 4 + 16 * k)),
                                        std::bit_cast<double>(get_u64(cb, 12 + 16 * k)));
    }
    for (std::int64_t k : rec.levels) {
      if (k != 0) (void)rec.codebook.index(k);
    }
  } else {
    rec.codebook = Codebook::uniform(rec.levels, rec.delta);
  }

  std::size_t expected = 0;
  for (std::size_t i : model.net.weighted_layers()) expected += model.net.layers[i].weight_count();
  if (expected != h.count) {
    throw ContainerError("container holds " + std::to_string(h.count) + " weights but " +
                         model.net.name + " has " + std::to_string(expected));
  }
  if (dither_fingerprint(h.count, h.delta, h.seed) != h.fingerprint) {
    throw ContainerError("dither seed does not match the stored fingerprint");
  }
  return model;
}

CompressedModel compress(const NetworkSpec& net, const FilterBank& weights, double delta,
                         std::uint64_t seed) {
  CompressedModel model;
  model.net = net;
  model.record = dithered_quantize(weights.flatten(), delta, seed);
  return model;
}

FilterBank reconstruct(const CompressedModel& model) {
  FilterBank w;
  for (std::size_t i : model.net.weighted_layers()) {
    w.tensors.emplace_back(model.net.layers[i].weight_shape());
    w.layers.push_back(i);
  }
  w.assign(dither_cancel(model.record));
  return w;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace unisparse
