#ifndef COMPTLL_TESTS_TEST_UTIL_HPP_
#define COMPTLL_TESTS_TEST_UTIL_HPP_

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "comptll/image.hpp"
#include "comptll/jpeg.hpp"

namespace testutil {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("comptll_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Smooth gradients plus a few sinusoids and mild noise; compresses like a
// natural image.
inline comptll::GrayImage smooth_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double fx = 0.02 + 0.1 * u(rng), fy = 0.02 + 0.1 * u(rng);
  const double px = 6.28 * u(rng), base = 60 + 120 * u(rng);
  const double gx = 40 * (u(rng) - 0.5), gy = 40 * (u(rng) - 0.5);
  comptll::GrayImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = base + 40 * std::sin(fx * x + px) * std::cos(fy * y) +
                 gx * x / std::max(1, w) + gy * y / std::max(1, h) + 4 * (u(rng) - 0.5);
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

inline comptll::GrayImage noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  comptll::GrayImage img(w, h);
  for (auto& s : img.samples) s = static_cast<std::uint8_t>(rng() & 0xFF);
  return img;
}

// Grid with sparse random coefficients that baseline Huffman coding can
// represent.
inline comptll::QuantizedBlockGrid random_grid(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto grid = comptll::QuantizedBlockGrid::for_image(
      w, h, comptll::scale_quant_table(comptll::standard_luma_table(), 50));
  int prev_dc = 0;
  for (auto& b : grid.blocks) {
    int dc = prev_dc + static_cast<int>(rng() % 301) - 150;
    dc = std::clamp(dc, -1024, 1023);
    b.coeffs[0] = static_cast<std::int16_t>(dc);
    prev_dc = dc;
    const int nz = static_cast<int>(rng() % 12);
    for (int k = 0; k < nz; ++k) {
      const int pos = 1 + static_cast<int>(rng() % 63);
      int mag = static_cast<int>(rng() % 1023) + 1;
      if (rng() % 4 != 0) mag = 1 + mag % 8;
      b.coeffs[static_cast<std::size_t>(pos)] =
          static_cast<std::int16_t>((rng() & 1) ? mag : -mag);
    }
  }
  return grid;
}

}  // namespace testutil

#endif  // COMPTLL_TESTS_TEST_UTIL_HPP_
