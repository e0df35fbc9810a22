#ifndef COMPTLL_IMAGE_HPP_
#define COMPTLL_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace comptll {

// Row-major 8-bit luminance image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> samples;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t at(int x, int y) const { return samples[index(x, y)]; }
  std::uint8_t& at(int x, int y) { return samples[index(x, y)]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(x);
  }
  bool empty() const { return width <= 0 || height <= 0; }

  bool operator==(const GrayImage&) const = default;
};

// Binary PGM (P5) with maxval 255. Comments in the header are skipped.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

// Peak signal-to-noise ratio in dB; +inf for identical images.
double psnr(const GrayImage& a, const GrayImage& b);

}  // namespace comptll

#endif  // COMPTLL_IMAGE_HPP_
