#include "unisparse/lzw.hpp"

#include <algorithm>
#include <bit>
#include <unordered_map>

namespace unisparse {

namespace lzw {

int code_width(std::uint64_t k) {
  const int bits = static_cast<int>(std::bit_width(257 + k));
  return std::min(16, std::max(9, bits));
}

}  // namespace lzw

namespace {

class BitWriter {
 public:
  void put(std::uint32_t code, int width) {
    acc_ |= std::uint64_t{code} << fill_;
    fill_ += width;
    while (fill_ >= 8) {
      out_.push_back(static_cast<std::uint8_t>(acc_));
      acc_ >>= 8;
      fill_ -= 8;
    }
  }
  std::vector<std::uint8_t> finish() {
    if (fill_ > 0) out_.push_back(static_cast<std::uint8_t>(acc_));
    return std::move(out_);
  }

 private:
  std::vector<std::uint8_t> out_;
  std::uint64_t acc_ = 0;
  int fill_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> in) : in_(in) {}
  bool get(int width, std::uint32_t& code) {
    if (pos_ + static_cast<std::uint64_t>(width) > in_.size() * 8) return false;
    code = 0;
    for (int b = 0; b < width; ++b) {
      const std::uint64_t p = pos_ + static_cast<std::uint64_t>(b);
      code |= static_cast<std::uint32_t>((in_[p >> 3] >> (p & 7)) & 1u) << b;
    }
    pos_ += static_cast<std::uint64_t>(width);
    return true;
  }
  std::uint64_t position() const { return pos_; }
  std::uint64_t size_bits() const { return in_.size() * 8; }

 private:
  std::span<const std::uint8_t> in_;
  std::uint64_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> input) {
  if (input.empty()) return {};
  BitWriter out;
  std::unordered_map<std::uint32_t, std::uint32_t> dict;
  dict.reserve(lzw::kMaxEntries);
  std::uint32_t next = lzw::kFirstCode;
  std::uint64_t k = 0;  // codes written since the last reset
  auto emit = [&](std::uint32_t code) { out.put(code, lzw::code_width(++k)); };

  std::uint32_t w = input[0];
  for (std::size_t i = 1; i < input.size(); ++i) {
    const std::uint8_t c = input[i];
    const std::uint32_t key = (w << 8) | c;
    auto it = dict.find(key);
    if (it != dict.end()) {
      w = it->second;
      continue;
    }
    emit(w);
    dict.emplace(key, next++);
    if (next == lzw::kMaxEntries) {
      emit(lzw::kClear);
      dict.clear();
      next = lzw::kFirstCode;
      k = 0;
    }
    w = c;
  }
  emit(w);
  emit(lzw::kEnd);
  return out.finish();
}

std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> input) {
  std::vector<std::uint8_t> out;
  if (input.empty()) return out;
  BitReader in(input);
  // Entry e (>= 258) is prefix[e] followed by byte last[e].
  std::vector<std::uint32_t> prefix(lzw::kMaxEntries);
  std::vector<std::uint8_t> last(lzw::kMaxEntries), first(lzw::kMaxEntries);
  for (std::uint32_t c = 0; c < 256; ++c) first[c] = last[c] = static_cast<std::uint8_t>(c);
  std::uint32_t next = lzw::kFirstCode;
  std::uint64_t k = 0;
  bool have_prev = false;
  std::uint32_t prev = 0;
  std::vector<std::uint8_t> scratch;

  auto expand = [&](std::uint32_t code) {
    scratch.clear();
    while (code >= lzw::kFirstCode) {
      scratch.push_back(last[code]);
      code = prefix[code];
    }
    scratch.push_back(static_cast<std::uint8_t>(code));
    out.insert(out.end(), scratch.rbegin(), scratch.rend());
  };

  for (;;) {
    const std::uint64_t at = in.position();
    std::uint32_t code = 0;
    if (!in.get(lzw::code_width(++k), code)) throw DecodeError("truncated LZW stream", at);
    if (code == lzw::kEnd) {
      if (in.size_bits() - in.position() >= 8) throw DecodeError("data after END", in.position());
      return out;
    }
    if (code == lzw::kClear) {
      next = lzw::kFirstCode;
      k = 0;
      have_prev = false;
      continue;
    }
    if (!have_prev) {
      if (code > 255) throw DecodeError("first code after reset is not a literal", at);
      out.push_back(static_cast<std::uint8_t>(code));
      prev = code;
      have_prev = true;
      continue;
    }
    if (next >= lzw::kMaxEntries) throw DecodeError("dictionary overflow without CLEAR", at);
    if (code < next && (code < 256 || code >= lzw::kFirstCode)) {
      expand(code);
      prefix[next] = prev;
      last[next] = first[code];
      first[next] = first[prev];
    } else if (code == next) {
      prefix[next] = prev;
      last[next] = first[prev];
      first[next] = first[prev];
      expand(code);
    } else {
      throw DecodeError("invalid LZW code " + std::to_string(code), at);
    }
    ++next;
    prev = code;
  }
}

std::vector<std::uint8_t> entropy_encode(std::span<const std::int64_t> levels) {
  std::vector<std::uint8_t> raw;
  raw.reserve(levels.size());
  for (std::int64_t v : levels) {
    std::uint64_t z = (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
    while (z >= 0x80) {
      raw.push_back(static_cast<std::uint8_t>(z | 0x80));
      z >>= 7;
    }
    raw.push_back(static_cast<std::uint8_t>(z));
  }
  return lzw_encode(raw);
}

std::vector<std::int64_t> entropy_decode(std::span<const std::uint8_t> bytes) {
  const std::vector<std::uint8_t> raw = lzw_decode(bytes);
  std::vector<std::int64_t> out;
  std::uint64_t z = 0;
  int shift = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (shift >= 64) throw DecodeError("varint longer than 64 bits", i * 8);
    z |= std::uint64_t{raw[i] & 0x7Fu} << shift;
    if (raw[i] & 0x80) {
      shift += 7;
      continue;
    }
    out.push_back(static_cast<std::int64_t>(z >> 1) ^ -static_cast<std::int64_t>(z & 1));
    z = 0;
    shift = 0;
  }
  if (shift != 0) throw DecodeError("unterminated varint in decoded levels", raw.size() * 8);
  return out;
}

}  // namespace unisparse
