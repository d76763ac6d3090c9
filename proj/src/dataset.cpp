#include "unisparse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "unisparse/rng.hpp"

namespace unisparse {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string hex_magic(std::uint32_t m) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << m;
  return os.str();
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DatasetError(path + ": cannot open");
  }
  std::uint32_t be32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
           (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
  }
  void read(unsigned char* dst, std::size_t n, const char* what) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DatasetError(path_ + ": truncated " + what + " at byte offset " +
                         std::to_string(offset_ + static_cast<std::size_t>(in_.gcount())));
    }
    offset_ += n;
  }
  std::size_t offset() const { return offset_; }
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw DatasetError(path_ + ": " + msg + " at byte offset " + std::to_string(at));
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

Tensor DatasetHandle::images(const Dataset& set, std::span<const std::size_t> indices) const {
  const std::size_t plane = set.height * set.width;
  Tensor out({indices.size(), 1, set.height, set.width});
  const double inv = 1.0 / stddev;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::uint8_t* src = set.pixels.data() + indices[k] * plane;
    for (std::size_t p = 0; p < plane; ++p) out[k * plane + p] = (src[p] - mean) * inv;
  }
  return out;
}

Tensor DatasetHandle::labels(const Dataset& set, std::span<const std::size_t> indices) const {
  Tensor out({indices.size()});
  for (std::size_t k = 0; k < indices.size(); ++k) out[k] = set.labels[indices[k]];
  return out;
}

Tensor DatasetHandle::all_images(const Dataset& set) const {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return images(set, idx);
}

Tensor DatasetHandle::all_labels(const Dataset& set) const {
  std::vector<std::size_t> idx(set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return labels(set, idx);
}

SyntheticSpec parse_synthetic_spec(const std::string& spec) {
  static const std::regex re(R"(synthetic:(\d+)x(\d+)x(\d+)(?::seed=(\d+))?)");
  std::smatch m;
  if (!std::regex_match(spec, m, re)) {
    throw DatasetError("bad synthetic dataset spec '" + spec +
                       "' (expected synthetic:<classes>x<samples>x<side>[:seed=<n>])");
  }
  SyntheticSpec s;
  s.classes = std::stoull(m[1]);
  s.samples = std::stoull(m[2]);
  s.side = std::stoull(m[3]);
  if (m[4].matched) s.seed = std::stoull(m[4]);
  if (s.classes < 2 || s.samples < s.classes || s.side < 4) {
    throw DatasetError("synthetic spec '" + spec +
                       "' needs >= 2 classes, >= one sample per class and side >= 4");
  }
  return s;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  SplitMix64 rng(spec.seed);
  Dataset d;
  d.height = d.width = spec.side;
  d.classes = spec.classes;
  const std::size_t plane = spec.side * spec.side;
  d.pixels.resize(spec.samples * plane);
  d.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) d.labels[i] = static_cast<std::uint32_t>(i % spec.classes);
  rng.shuffle(d.labels);

  const double pi = std::numbers::pi;
  const double k = static_cast<double>(spec.classes);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const std::uint32_t c = d.labels[i];
    const double angle = pi * c / k + rng.uniform(-0.2, 0.2) * pi / k;
    const double freq = 2.0 * pi * (c % 2 == 0 ? 0.16 : 0.28);
    const double phase = rng.uniform(0.0, 2.0 * pi);
    const double contrast = rng.uniform(30.0, 70.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < spec.side; ++y) {
      for (std::size_t x = 0; x < spec.side; ++x) {
        const double u = ca * static_cast<double>(x) + sa * static_cast<double>(y);
        double v = 128.0 + contrast * std::sin(freq * u + phase) + 32.0 * rng.normal();
        v = std::clamp(std::round(v), 0.0, 255.0);
        d.pixels[i * plane + y * spec.side + x] = static_cast<std::uint8_t>(v);
      }
    }
  }
  return d;
}

Dataset read_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset d;
  ByteReader img(images_path);
  const std::uint32_t magic = img.be32("magic");
  if (magic != kImageMagic) {
    img.fail("bad magic " + hex_magic(magic) + ", expected " + hex_magic(kImageMagic) +
                 " (u8 images, 3 dims)",
             0);
  }
  const std::uint32_t n = img.be32("dimension");
  d.height = img.be32("dimension");
  d.width = img.be32("dimension");
  if (n == 0 || d.height == 0 || d.width == 0) img.fail("zero dimension", 4);
  d.pixels.resize(std::size_t{n} * d.height * d.width);
  img.read(d.pixels.data(), d.pixels.size(), "pixel data");
  if (!img.at_end()) img.fail("trailing bytes after pixel data", img.offset());

  ByteReader lab(labels_path);
  const std::uint32_t lmagic = lab.be32("magic");
  if (lmagic != kLabelMagic) {
    lab.fail("bad magic " + hex_magic(lmagic) + ", expected " + hex_magic(kLabelMagic) +
                 " (u8 labels, 1 dim)",
             0);
  }
  const std::uint32_t ln = lab.be32("dimension");
  if (ln != n) {
    lab.fail("label count " + std::to_string(ln) + " does not match image count " +
                 std::to_string(n),
             4);
  }
  std::vector<std::uint8_t> raw(n);
  lab.read(raw.data(), raw.size(), "label data");
  if (!lab.at_end()) lab.fail("trailing bytes after label data", lab.offset());
  d.labels.assign(raw.begin(), raw.end());
  d.classes = *std::max_element(raw.begin(), raw.end()) + 1u;
  if (d.classes < 2) throw DatasetError(labels_path + ": labels must span at least 2 classes");
  return d;
}

void write_idx(const Dataset& data, const std::string& images_path,
               const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw DatasetError("cannot write IDX files");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(data.height));
  write_be32(img, static_cast<std::uint32_t>(data.width));
  img.write(reinterpret_cast<const char*>(data.pixels.data()),
            static_cast<std::streamsize>(data.pixels.size()));
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (std::uint32_t l : data.labels) lab.put(static_cast<char>(l));
}

DatasetHandle make_handle(Dataset all, std::string source) {
  DatasetHandle h;
  h.source = std::move(source);
  const std::size_t n = all.size();
  const std::size_t n_train = n * 4 / 5;
  if (n_train == 0 || n_train == n) throw DatasetError("dataset too small to split 80/20");
  const std::size_t plane = all.height * all.width;

  auto slice = [&](std::size_t begin, std::size_t end) {
    Dataset s;
    s.height = all.height;
    s.width = all.width;
    s.classes = all.classes;
    s.pixels.assign(all.pixels.begin() + static_cast<std::ptrdiff_t>(begin * plane),
                    all.pixels.begin() + static_cast<std::ptrdiff_t>(end * plane));
    s.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    all.labels.begin() + static_cast<std::ptrdiff_t>(end));
    return s;
  };
  h.train = slice(0, n_train);
  h.test = slice(n_train, n);

  double sum = 0.0, sq = 0.0;
  for (std::uint8_t p : h.train.pixels) {
    sum += p;
    sq += static_cast<double>(p) * p;
  }
  const double count = static_cast<double>(h.train.pixels.size());
  h.mean = sum / count;
  const double var = sq / count - h.mean * h.mean;
  h.stddev = var > 1e-12 ? std::sqrt(var) : 1.0;
  return h;
}

DatasetHandle ingest_dataset(const std::string& source) {
  if (source.rfind("synthetic:", 0) == 0) {
    return make_handle(generate_synthetic(parse_synthetic_spec(source)), source);
  }
  std::string rest = source.rfind("idx:", 0) == 0 ? source.substr(4) : source;
  const auto comma = rest.find(',');
  if (comma == std::string::npos) {
    throw DatasetError("dataset '" + source +
                       "' must be synthetic:<spec> or <images.idx>,<labels.idx>");
  }
  return make_handle(read_idx(rest.substr(0, comma), rest.substr(comma + 1)), source);
}

}  // namespace unisparse
