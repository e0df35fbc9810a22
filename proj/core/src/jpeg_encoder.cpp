#include <algorithm>
#include <cstdlib>
#include <string>

#include "comptll/error.hpp"
#include "comptll/huffman.hpp"
#include "comptll/jpeg.hpp"

namespace comptll {
namespace {

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, int count) {
    if (count == 0) return;
    acc_ = (acc_ << count) | (bits & ((1u << count) - 1));
    n_ += count;
    while (n_ >= 8) {
      n_ -= 8;
      emit(static_cast<std::uint8_t>(acc_ >> n_));
    }
  }

  // Pads the final partial byte with one bits.
  void flush() {
    if (n_ > 0) put((1u << (8 - n_)) - 1, 8 - n_);
  }

 private:
  void emit(std::uint8_t byte) {
    out_.push_back(byte);
    if (byte == 0xFF) out_.push_back(0x00);
  }

  std::vector<std::uint8_t>& out_;
  std::uint64_t acc_ = 0;
  int n_ = 0;
};

int magnitude_category(int v) {
  int a = std::abs(v);
  int s = 0;
  while (a) {
    ++s;
    a >>= 1;
  }
  return s;
}

std::uint32_t magnitude_bits(int v, int category) {
  return static_cast<std::uint32_t>(v >= 0 ? v : v + (1 << category) - 1);
}

void put_u16(std::vector<std::uint8_t>& out, unsigned v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_marker(std::vector<std::uint8_t>& out, std::uint8_t code) {
  out.push_back(0xFF);
  out.push_back(code);
}

void write_dht(std::vector<std::uint8_t>& out, int table_class,
               const HuffmanSpec& spec) {
  put_marker(out, 0xC4);
  put_u16(out, 2 + 1 + 16 + static_cast<unsigned>(spec.values.size()));
  out.push_back(static_cast<std::uint8_t>(table_class << 4));  // id 0
  out.insert(out.end(), spec.bits.begin(), spec.bits.end());
  out.insert(out.end(), spec.values.begin(), spec.values.end());
}

void write_headers(std::vector<std::uint8_t>& out, const QuantizedBlockGrid& g) {
  put_marker(out, 0xD8);  // SOI

  put_marker(out, 0xE0);  // APP0 JFIF 1.01, no density, no thumbnail
  put_u16(out, 16);
  for (char c : std::string("JFIF")) out.push_back(static_cast<std::uint8_t>(c));
  out.insert(out.end(), {0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00});

  put_marker(out, 0xDB);  // DQT, 8-bit precision, table 0, zigzag order
  put_u16(out, 2 + 1 + kBlockSize);
  out.push_back(0x00);
  for (int k = 0; k < kBlockSize; ++k) {
    out.push_back(static_cast<std::uint8_t>(g.table.q[kZigzag[k]]));
  }

  put_marker(out, 0xC0);  // SOF0
  put_u16(out, 8 + 3);
  out.push_back(8);
  put_u16(out, static_cast<unsigned>(g.orig_height));
  put_u16(out, static_cast<unsigned>(g.orig_width));
  out.push_back(1);     // components
  out.push_back(1);     // component id
  out.push_back(0x11);  // sampling 1x1
  out.push_back(0);     // quant table 0

  write_dht(out, 0, standard_dc_luma_spec());
  write_dht(out, 1, standard_ac_luma_spec());

  put_marker(out, 0xDA);  // SOS
  put_u16(out, 6 + 2);
  out.push_back(1);     // components in scan
  out.push_back(1);     // component id
  out.push_back(0x00);  // DC table 0, AC table 0
  out.push_back(0);     // Ss
  out.push_back(63);    // Se
  out.push_back(0);     // Ah/Al
}

}  // namespace

QuantizedBlockGrid QuantizedBlockGrid::for_image(int width, int height,
                                                 QuantTable table) {
  if (width < 1 || height < 1) {
    throw DomainError("image dimensions must be >= 1");
  }
  QuantizedBlockGrid g;
  g.orig_width = width;
  g.orig_height = height;
  g.blocks_w = (width + kBlockSide - 1) / kBlockSide;
  g.blocks_h = (height + kBlockSide - 1) / kBlockSide;
  g.table = table;
  g.blocks.resize(static_cast<std::size_t>(g.blocks_w) * g.blocks_h);
  return g;
}

void QuantizedBlockGrid::validate() const {
  if (orig_width < 1 || orig_height < 1) {
    throw DomainError("grid dimensions must be >= 1");
  }
  if (blocks_w != (orig_width + kBlockSide - 1) / kBlockSide ||
      blocks_h != (orig_height + kBlockSide - 1) / kBlockSide ||
      blocks.size() != static_cast<std::size_t>(blocks_w) * blocks_h) {
    throw DomainError("grid block counts disagree with image dimensions");
  }
  for (auto q : table.q) {
    if (q < 1) throw DomainError("quantization divisors must be >= 1");
  }
}

QuantizedBlockGrid quantize_image(const GrayImage& img, int quality) {
  if (img.empty()) throw DomainError("cannot encode an empty image");
  const QuantTable table = scale_quant_table(standard_luma_table(), quality);
  QuantizedBlockGrid g = QuantizedBlockGrid::for_image(img.width, img.height, table);
  PixelBlock px;
  for (int by = 0; by < g.blocks_h; ++by) {
    for (int bx = 0; bx < g.blocks_w; ++bx) {
      for (int i = 0; i < kBlockSide; ++i) {
        const int y = std::min(by * kBlockSide + i, img.height - 1);
        for (int j = 0; j < kBlockSide; ++j) {
          const int x = std::min(bx * kBlockSide + j, img.width - 1);
          px.samples[i * kBlockSide + j] = img.at(x, y);
        }
      }
      g.at(bx, by) = quantize(fdct(px, LevelShift::kOn), table);
    }
  }
  return g;
}

JpegStream encode(const GrayImage& img, int quality) {
  return encode_grid(quantize_image(img, quality));
}

JpegStream encode_grid(const QuantizedBlockGrid& grid) {
  grid.validate();
  if (grid.orig_width > 0xFFFF || grid.orig_height > 0xFFFF) {
    throw DomainError("baseline JPEG dimensions are limited to 65535");
  }
  for (auto q : grid.table.q) {
    if (q > 255) throw DomainError("8-bit DQT requires divisors <= 255");
  }
  const HuffmanEncoder dc(standard_dc_luma_spec());
  const HuffmanEncoder ac(standard_ac_luma_spec());

  JpegStream out;
  out.reserve(1024 + grid.blocks.size() * 8);
  write_headers(out, grid);

  BitWriter bw(out);
  int pred = 0;
  for (std::size_t b = 0; b < grid.blocks.size(); ++b) {
    const auto scan = to_zigzag(grid.blocks[b]);
    const int diff = scan[0] - pred;
    pred = scan[0];
    if (std::abs(diff) > 2047) {
      throw DomainError("DC difference out of baseline range in block " +
                        std::to_string(b));
    }
    const int dc_cat = magnitude_category(diff);
    bw.put(dc.code(static_cast<std::uint8_t>(dc_cat)), dc.length(static_cast<std::uint8_t>(dc_cat)));
    bw.put(magnitude_bits(diff, dc_cat), dc_cat);

    int run = 0;
    for (int k = 1; k < kBlockSize; ++k) {
      const int v = scan[k];
      if (v == 0) {
        ++run;
        continue;
      }
      if (std::abs(v) > 1023) {
        throw DomainError("AC coefficient out of baseline range in block " +
                          std::to_string(b));
      }
      while (run > 15) {
        bw.put(ac.code(0xF0), ac.length(0xF0));
        run -= 16;
      }
      const int cat = magnitude_category(v);
      const auto sym = static_cast<std::uint8_t>((run << 4) | cat);
      bw.put(ac.code(sym), ac.length(sym));
      bw.put(magnitude_bits(v, cat), cat);
      run = 0;
    }
    if (run > 0) bw.put(ac.code(0x00), ac.length(0x00));
  }
  bw.flush();
  put_marker(out, 0xD9);  // EOI
  return out;
}

}  // namespace comptll
