#ifndef COMPTLL_JPEG_HPP_
#define COMPTLL_JPEG_HPP_

// Baseline sequential, single-component JPEG. partial_decode stops after
// entropy decoding and returns the quantized coefficient blocks; full_decode
// continues through dequantization and the inverse DCT.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "comptll/dct.hpp"
#include "comptll/image.hpp"

namespace comptll {

using JpegStream = std::vector<std::uint8_t>;

// Quantized DCT blocks of one image, in raster block order.
struct QuantizedBlockGrid {
  int blocks_w = 0;
  int blocks_h = 0;
  int orig_width = 0;
  int orig_height = 0;
  QuantTable table;
  std::vector<QuantBlock> blocks;

  // Empty grid sized for an image of the given dimensions.
  static QuantizedBlockGrid for_image(int width, int height, QuantTable table);

  const QuantBlock& at(int bx, int by) const {
    return blocks[static_cast<std::size_t>(by) * blocks_w + bx];
  }
  QuantBlock& at(int bx, int by) {
    return blocks[static_cast<std::size_t>(by) * blocks_w + bx];
  }

  // Throws DomainError if the block counts disagree with the dimensions.
  void validate() const;

  bool operator==(const QuantizedBlockGrid&) const = default;
};

// Forward DCT + quantization of every 8x8 block (edge blocks replicate the
// last row/column). Throws DomainError for empty images or bad quality.
QuantizedBlockGrid quantize_image(const GrayImage& img, int quality);

// Dequantize + inverse DCT, cropped to the original dimensions.
GrayImage reconstruct_image(const QuantizedBlockGrid& grid);

JpegStream encode(const GrayImage& img, int quality);

// Entropy-codes an existing grid. Throws DomainError when a coefficient is
// outside what baseline Huffman coding can represent (|AC| > 1023 or a DC
// difference with |diff| > 2047).
JpegStream encode_grid(const QuantizedBlockGrid& grid);

// Throws FormatError (with byte offset) on truncated data, invalid markers,
// undecodable Huffman codes and unsupported stream types.
QuantizedBlockGrid partial_decode(std::span<const std::uint8_t> stream);
GrayImage full_decode(std::span<const std::uint8_t> stream);

// QDB container: "QDB1", version, dimensions, quality, quantization table,
// then raw little-endian coefficient blocks.
inline constexpr std::size_t kQdbHeaderBytes = 4 + 1 + 4 + 4 + 2 + 2 * kBlockSize;

std::vector<std::uint8_t> serialize_qdb(const QuantizedBlockGrid& grid);
QuantizedBlockGrid deserialize_qdb(std::span<const std::uint8_t> bytes);
void write_qdb_file(const QuantizedBlockGrid& grid,
                    const std::filesystem::path& path);
QuantizedBlockGrid read_qdb_file(const std::filesystem::path& path);

}  // namespace comptll

#endif  // COMPTLL_JPEG_HPP_
