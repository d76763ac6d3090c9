#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisparse {

/// Byte-oriented LZW with variable-width codes, packed LSB-first.
///
/// Codes 0-255 are literals, 256 is CLEAR, 257 is END and new dictionary
/// entries start at 258. The k-th code written since the last reset
/// (k = 1, 2, ...) is min(16, max(9, bit_length(257 + k))) bits wide. When
/// the dictionary reaches 65536 entries the encoder writes CLEAR and both
/// sides start over. A non-empty stream ends with END and zero padding to the
/// next byte; the empty input encodes to zero bytes.
namespace lzw {

inline constexpr std::uint32_t kClear = 256;
inline constexpr std::uint32_t kEnd = 257;
inline constexpr std::uint32_t kFirstCode = 258;
inline constexpr std::uint32_t kMaxEntries = 65536;

/// Width of the k-th code after a reset.
int code_width(std::uint64_t k);

}  // namespace lzw

class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::uint64_t bit_position)
      : std::runtime_error(what + " at bit " + std::to_string(bit_position)),
        bit_position_(bit_position) {}
  std::uint64_t bit_position() const { return bit_position_; }

 private:
  std::uint64_t bit_position_;
};

std::vector<std::uint8_t> lzw_encode(std::span<const std::uint8_t> input);
/// Throws DecodeError naming the bit offset of the offending code.
std::vector<std::uint8_t> lzw_decode(std::span<const std::uint8_t> input);

/// Zigzag-mapped LEB128 varints of the levels, then LZW.
std::vector<std::uint8_t> entropy_encode(std::span<const std::int64_t> levels);
std::vector<std::int64_t> entropy_decode(std::span<const std::uint8_t> bytes);

}  // namespace unisparse
