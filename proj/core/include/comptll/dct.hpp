#ifndef COMPTLL_DCT_HPP_
#define COMPTLL_DCT_HPP_

// 8x8 block transform primitives shared by the codec and the compressed-domain
// input path. All functions are pure.

#include <array>
#include <cstdint>
#include <span>

namespace comptll {

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockSize = 64;

// Row-major 8x8 luminance samples. The element type bounds samples to [0,255].
struct PixelBlock {
  std::array<std::uint8_t, kBlockSize> samples{};
  bool operator==(const PixelBlock&) const = default;
};

// Row-major 8x8 real DCT coefficients; index 8*u + v holds F(u, v), where u is
// the vertical and v the horizontal frequency.
struct DctBlock {
  std::array<double, kBlockSize> coeffs{};
};

// Quantized coefficients in natural (row-major frequency) order. Entries are
// kept within the 12-bit signed range [kMinQuant, kMaxQuant].
struct QuantBlock {
  static constexpr int kMinQuant = -2048;
  static constexpr int kMaxQuant = 2047;
  std::array<std::int16_t, kBlockSize> coeffs{};
  bool operator==(const QuantBlock&) const = default;
};

// Quantization divisors in natural order. `quality` records the scaling
// factor the table was derived from; 0 marks a table of unknown provenance
// (for example one read from a third-party stream).
struct QuantTable {
  std::array<std::uint16_t, kBlockSize> q{};
  int quality = 50;
  bool operator==(const QuantTable&) const = default;
};

enum class LevelShift : bool { kOff = false, kOn = true };

// Orthonormal 2-D DCT-II. With level shift the samples are centred by
// subtracting 128 first, as baseline JPEG requires.
DctBlock fdct(const PixelBlock& block, LevelShift shift);

// Inverse of fdct followed by rounding to nearest and clamping to [0,255].
PixelBlock idct(const DctBlock& block, LevelShift shift);

// round-half-away-from-zero(F / q), saturated to the 12-bit range.
QuantBlock quantize(const DctBlock& block, const QuantTable& table);
DctBlock dequantize(const QuantBlock& block, const QuantTable& table);

// The standard luminance table (quality 50, DC divisor 16).
QuantTable standard_luma_table();

// IJG-style quality scaling. Throws DomainError when quality is outside
// [1, 100].
QuantTable scale_quant_table(const QuantTable& base, int quality);

// Returns the quality q in [1,100] such that scaling the standard luminance
// table by q reproduces `q_values`, or 0 if none does.
int infer_quality(const std::array<std::uint16_t, kBlockSize>& q_values);

// kZigzag[k] is the natural index of the k-th coefficient in scan order.
extern const std::array<std::uint8_t, kBlockSize> kZigzag;

std::array<int, kBlockSize> to_zigzag(const QuantBlock& block);
QuantBlock from_zigzag(std::span<const int, kBlockSize> scan);

}  // namespace comptll

#endif  // COMPTLL_DCT_HPP_
