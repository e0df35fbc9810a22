#include "comptll/coeff_plane.hpp"

#include <string>

#include "comptll/error.hpp"

namespace comptll {
namespace {

void check_side(int side) {
  if (!is_supported_side(side)) {
    throw DomainError("plane side must be 256, 512 or 1024, got " +
                      std::to_string(side));
  }
}

int blocks_for(int pixels) { return (pixels + kBlockSide - 1) / kBlockSide; }

}  // namespace

bool is_supported_side(int side) {
  return side == 256 || side == 512 || side == 1024;
}

std::vector<int> block_index_map(int src_blocks, int dst_blocks) {
  if (src_blocks < 1 || dst_blocks < 1) throw DomainError("block counts must be >= 1");
  std::vector<int> map(static_cast<std::size_t>(dst_blocks));
  for (int k = 0; k < dst_blocks; ++k) {
    map[static_cast<std::size_t>(k)] = static_cast<int>(
        static_cast<long long>(k) * src_blocks / dst_blocks);
  }
  return map;
}

CoeffPlane assemble_plane(const QuantizedBlockGrid& grid, int side,
                          PlaneOptions options) {
  if (grid.blocks.empty() || grid.blocks_w < 1 || grid.blocks_h < 1) {
    throw DomainError("cannot assemble a plane from an empty grid");
  }
  check_side(side);
  const int dst_blocks = side / kBlockSide;
  const auto map_x = block_index_map(grid.blocks_w, dst_blocks);
  const auto map_y = block_index_map(grid.blocks_h, dst_blocks);

  CoeffPlane plane;
  plane.side = side;
  plane.values.resize(static_cast<std::size_t>(side) * side);
  const float inv = 1.0f / plane.norm_scale;
  for (int ty = 0; ty < dst_blocks; ++ty) {
    for (int tx = 0; tx < dst_blocks; ++tx) {
      const QuantBlock& qb = grid.at(map_x[tx], map_y[ty]);
      for (int u = 0; u < kBlockSide; ++u) {
        float* row = plane.values.data() +
                     static_cast<std::size_t>(ty * kBlockSide + u) * side +
                     tx * kBlockSide;
        for (int v = 0; v < kBlockSide; ++v) {
          const int k = u * kBlockSide + v;
          float c = qb.coeffs[k];
          if (options.dequantize) c *= grid.table.q[k];
          row[v] = c * inv;
        }
      }
    }
  }
  return plane;
}

std::vector<std::uint8_t> resample_to_side(std::span<const std::uint8_t> raster,
                                           int width, int height, int side,
                                           std::uint8_t pad) {
  if (width < 1 || height < 1 ||
      raster.size() != static_cast<std::size_t>(width) * height) {
    throw DomainError("raster size disagrees with its dimensions");
  }
  check_side(side);
  const int dst_blocks = side / kBlockSide;
  const auto map_x = block_index_map(blocks_for(width), dst_blocks);
  const auto map_y = block_index_map(blocks_for(height), dst_blocks);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(side) * side, pad);
  for (int y = 0; y < side; ++y) {
    const int sy = map_y[y / kBlockSide] * kBlockSide + y % kBlockSide;
    if (sy >= height) continue;
    for (int x = 0; x < side; ++x) {
      const int sx = map_x[x / kBlockSide] * kBlockSide + x % kBlockSide;
      if (sx >= width) continue;
      out[static_cast<std::size_t>(y) * side + x] =
          raster[static_cast<std::size_t>(sy) * width + sx];
    }
  }
  return out;
}

std::vector<float> project_to_image(std::span<const float> side_map, int side,
                                    int width, int height) {
  check_side(side);
  if (side_map.size() != static_cast<std::size_t>(side) * side) {
    throw DomainError("map size disagrees with side");
  }
  if (width < 1 || height < 1) throw DomainError("image dimensions must be >= 1");
  const int dst_blocks = side / kBlockSide;
  const long long src_w = blocks_for(width);
  const long long src_h = blocks_for(height);
  // When the plane duplicates blocks, the first tile at or after b*dst/src
  // holds source block b; when it drops blocks, the nearest kept one below.
  auto tile_of = [dst_blocks](long long b, long long src) {
    const long long num = b * dst_blocks;
    return static_cast<int>(src <= dst_blocks ? (num + src - 1) / src : num / src);
  };
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int ty = tile_of(y / kBlockSide, src_h);
    const int py = ty * kBlockSide + y % kBlockSide;
    for (int x = 0; x < width; ++x) {
      const int tx = tile_of(x / kBlockSide, src_w);
      const int px = tx * kBlockSide + x % kBlockSide;
      out[static_cast<std::size_t>(y) * width + x] =
          side_map[static_cast<std::size_t>(py) * side + px];
    }
  }
  return out;
}

}  // namespace comptll
