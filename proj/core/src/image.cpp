#include "comptll/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "comptll/error.hpp"

namespace comptll {
namespace {

using Kind = FormatError::Kind;

class HeaderScanner {
 public:
  explicit HeaderScanner(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  long read_uint() {
    skip_space_and_comments();
    if (pos_ >= b_.size()) throw FormatError(Kind::kTruncated, pos_, "PGM header");
    if (!std::isdigit(b_[pos_])) {
      throw FormatError(Kind::kMalformed, pos_, "expected decimal in PGM header");
    }
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > std::numeric_limits<int>::max()) {
        throw FormatError(Kind::kMalformed, pos_, "PGM header value too large");
      }
      ++pos_;
    }
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w),
      height(h),
      samples(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(Kind::kBadMagic, 0, "expected binary PGM (P5)");
  }
  HeaderScanner scan(bytes);
  scan.advance(2);
  const long w = scan.read_uint();
  const long h = scan.read_uint();
  const long maxval = scan.read_uint();
  if (w < 1 || h < 1) {
    throw FormatError(Kind::kMalformed, scan.pos(), "PGM dimensions must be >= 1");
  }
  if (maxval != 255) {
    throw FormatError(Kind::kUnsupported, scan.pos(), "PGM maxval must be 255");
  }
  if (scan.pos() >= bytes.size() || !std::isspace(bytes[scan.pos()])) {
    throw FormatError(Kind::kMalformed, scan.pos(), "missing PGM raster separator");
  }
  scan.advance(1);
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - scan.pos() < need) {
    throw FormatError(Kind::kTruncated, bytes.size(), "PGM raster");
  }
  GrayImage img(static_cast<int>(w), static_cast<int>(h));
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(scan.pos()), need,
              img.samples.begin());
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header = "P5\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.samples.begin(), img.samples.end());
  return out;
}

GrayImage read_pgm(const std::filesystem::path& path) {
  return decode_pgm(read_file(path));
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  write_file(path, encode_pgm(img));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

double psnr(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) {
    throw DomainError("psnr: image dimensions differ");
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const double d = static_cast<double>(a.samples[i]) - b.samples[i];
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.samples.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace comptll
