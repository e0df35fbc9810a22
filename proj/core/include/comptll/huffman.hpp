#ifndef COMPTLL_HUFFMAN_HPP_
#define COMPTLL_HUFFMAN_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace comptll {

// A JPEG DHT table: bits[i] codes of length i+1, followed by the symbols in
// order of increasing code length.
struct HuffmanSpec {
  std::array<std::uint8_t, 16> bits{};
  std::vector<std::uint8_t> values;
  bool operator==(const HuffmanSpec&) const = default;
};

// Typical luminance tables from the JPEG standard (Annex K.3).
HuffmanSpec standard_dc_luma_spec();
HuffmanSpec standard_ac_luma_spec();

// True when the code-length counts satisfy the Kraft inequality, the symbol
// count matches, and no code is all ones (reserved by the standard).
bool is_valid_spec(const HuffmanSpec& spec);

// Canonical code assignment for encoding.
class HuffmanEncoder {
 public:
  explicit HuffmanEncoder(const HuffmanSpec& spec);

  // Code and length for `symbol`; length 0 means the symbol has no code.
  std::uint16_t code(std::uint8_t symbol) const { return code_[symbol]; }
  std::uint8_t length(std::uint8_t symbol) const { return length_[symbol]; }

 private:
  std::array<std::uint16_t, 256> code_{};
  std::array<std::uint8_t, 256> length_{};
};

// Canonical decoder with a kLookupBits fast path.
class HuffmanDecoder {
 public:
  static constexpr int kLookupBits = 9;

  explicit HuffmanDecoder(const HuffmanSpec& spec);

  struct Entry {
    std::uint8_t symbol = 0;
    std::uint8_t length = 0;  // 0: code longer than kLookupBits or invalid
  };

  // Fast path for the next kLookupBits bits (MSB first).
  const Entry& lookup(unsigned peek) const { return lookup_[peek]; }

  // Slow path: `code` holds `length` bits. Returns the symbol if that prefix
  // is a complete code of exactly that length.
  std::optional<std::uint8_t> match(int length, std::uint32_t code) const;

 private:
  std::array<std::int32_t, 17> max_code_{};  // -1 when no codes of a length
  std::array<std::int32_t, 17> min_code_{};
  std::array<std::int32_t, 17> val_ptr_{};
  std::vector<std::uint8_t> values_;
  std::array<Entry, 1u << kLookupBits> lookup_{};
};

}  // namespace comptll

#endif  // COMPTLL_HUFFMAN_HPP_
