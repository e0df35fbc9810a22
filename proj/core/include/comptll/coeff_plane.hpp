#ifndef COMPTLL_COEFF_PLANE_HPP_
#define COMPTLL_COEFF_PLANE_HPP_

// Bridges partial-decode output to the network: quantized blocks are tiled at
// their spatial positions (natural frequency order inside each 8x8 tile) and
// resized to the model side by selecting or duplicating whole blocks.

#include <cstdint>
#include <span>
#include <vector>

#include "comptll/jpeg.hpp"

namespace comptll {

inline constexpr float kCoeffNormScale = 1024.0f;

struct CoeffPlane {
  int side = 0;
  float norm_scale = kCoeffNormScale;
  std::vector<float> values;  // side * side, row-major

  float at(int x, int y) const {
    return values[static_cast<std::size_t>(y) * side + x];
  }
};

struct PlaneOptions {
  // Multiply by the quantization table before normalizing. Off by default:
  // the network consumes the quantized representation directly.
  bool dequantize = false;
};

bool is_supported_side(int side);  // 256, 512 or 1024

// Throws DomainError for an empty grid or an unsupported side.
CoeffPlane assemble_plane(const QuantizedBlockGrid& grid, int side,
                          PlaneOptions options = {});

// map[k] = source block feeding destination block k, floor(k * src / dst).
std::vector<int> block_index_map(int src_blocks, int dst_blocks);

// Resamples a pixel-domain raster onto a side x side plane with the same
// block-granular mapping assemble_plane uses, so spatial positions line up.
// Pixels past the raster edge are filled with `pad`.
std::vector<std::uint8_t> resample_to_side(std::span<const std::uint8_t> raster,
                                           int width, int height, int side,
                                           std::uint8_t pad);

// Inverse of the mapping: samples a side x side map back onto a width x height
// pixel grid.
std::vector<float> project_to_image(std::span<const float> side_map, int side,
                                    int width, int height);

}  // namespace comptll

#endif  // COMPTLL_COEFF_PLANE_HPP_
