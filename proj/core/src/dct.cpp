#include "comptll/dct.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "comptll/error.hpp"

namespace comptll {
namespace {

// kBasis[u][x] = c(u) * cos((2x + 1) u pi / 16), c(0) = sqrt(1/8), else 1/2.
// The 2-D transform F = B f B^T is then exactly the orthonormal 8x8 DCT-II.
struct Basis {
  double m[kBlockSide][kBlockSide];
  Basis() {
    for (int u = 0; u < kBlockSide; ++u) {
      const double c = u == 0 ? std::sqrt(0.125) : 0.5;
      for (int x = 0; x < kBlockSide; ++x) {
        m[u][x] = c * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
  }
};

const Basis& basis() {
  static const Basis b;
  return b;
}

constexpr std::array<std::uint16_t, kBlockSize> kStandardLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

}  // namespace

const std::array<std::uint8_t, kBlockSize> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

DctBlock fdct(const PixelBlock& block, LevelShift shift) {
  const auto& b = basis().m;
  const double offset = shift == LevelShift::kOn ? 128.0 : 0.0;
  double tmp[kBlockSide][kBlockSide];  // tmp[i][v] = sum_j f(i,j) b[v][j]
  for (int i = 0; i < kBlockSide; ++i) {
    for (int v = 0; v < kBlockSide; ++v) {
      double acc = 0.0;
      for (int j = 0; j < kBlockSide; ++j) {
        acc += (block.samples[i * kBlockSide + j] - offset) * b[v][j];
      }
      tmp[i][v] = acc;
    }
  }
  DctBlock out;
  for (int u = 0; u < kBlockSide; ++u) {
    for (int v = 0; v < kBlockSide; ++v) {
      double acc = 0.0;
      for (int i = 0; i < kBlockSide; ++i) acc += b[u][i] * tmp[i][v];
      out.coeffs[u * kBlockSide + v] = acc;
    }
  }
  return out;
}

PixelBlock idct(const DctBlock& block, LevelShift shift) {
  const auto& b = basis().m;
  const double offset = shift == LevelShift::kOn ? 128.0 : 0.0;
  double tmp[kBlockSide][kBlockSide];  // tmp[u][j] = sum_v F(u,v) b[v][j]
  for (int u = 0; u < kBlockSide; ++u) {
    for (int j = 0; j < kBlockSide; ++j) {
      double acc = 0.0;
      for (int v = 0; v < kBlockSide; ++v) {
        acc += block.coeffs[u * kBlockSide + v] * b[v][j];
      }
      tmp[u][j] = acc;
    }
  }
  PixelBlock out;
  for (int i = 0; i < kBlockSide; ++i) {
    for (int j = 0; j < kBlockSide; ++j) {
      double acc = 0.0;
      for (int u = 0; u < kBlockSide; ++u) acc += b[u][i] * tmp[u][j];
      const long r = std::lround(acc + offset);
      out.samples[i * kBlockSide + j] =
          static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
    }
  }
  return out;
}

QuantBlock quantize(const DctBlock& block, const QuantTable& table) {
  QuantBlock out;
  for (int k = 0; k < kBlockSize; ++k) {
    // std::lround rounds halfway cases away from zero.
    const long r = std::lround(block.coeffs[k] / table.q[k]);
    out.coeffs[k] = static_cast<std::int16_t>(std::clamp<long>(
        r, QuantBlock::kMinQuant, QuantBlock::kMaxQuant));
  }
  return out;
}

DctBlock dequantize(const QuantBlock& block, const QuantTable& table) {
  DctBlock out;
  for (int k = 0; k < kBlockSize; ++k) {
    out.coeffs[k] = static_cast<double>(block.coeffs[k]) * table.q[k];
  }
  return out;
}

QuantTable standard_luma_table() { return QuantTable{kStandardLuma, 50}; }

QuantTable scale_quant_table(const QuantTable& base, int quality) {
  if (quality < 1 || quality > 100) {
    throw DomainError("quality must be in [1,100], got " +
                      std::to_string(quality));
  }
  const long scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  QuantTable out;
  out.quality = quality;
  for (int k = 0; k < kBlockSize; ++k) {
    const long v = (static_cast<long>(base.q[k]) * scale + 50) / 100;
    out.q[k] = static_cast<std::uint16_t>(std::clamp(v, 1L, 255L));
  }
  return out;
}

int infer_quality(const std::array<std::uint16_t, kBlockSize>& q_values) {
  const QuantTable base = standard_luma_table();
  for (int quality = 1; quality <= 100; ++quality) {
    if (scale_quant_table(base, quality).q == q_values) return quality;
  }
  return 0;
}

std::array<int, kBlockSize> to_zigzag(const QuantBlock& block) {
  std::array<int, kBlockSize> scan{};
  for (int k = 0; k < kBlockSize; ++k) scan[k] = block.coeffs[kZigzag[k]];
  return scan;
}

QuantBlock from_zigzag(std::span<const int, kBlockSize> scan) {
  QuantBlock out;
  for (int k = 0; k < kBlockSize; ++k) {
    out.coeffs[kZigzag[k]] = static_cast<std::int16_t>(scan[k]);
  }
  return out;
}

}  // namespace comptll
