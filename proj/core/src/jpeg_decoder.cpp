#include <algorithm>
#include <array>
#include <optional>
#include <string>

#include "comptll/error.hpp"
#include "comptll/huffman.hpp"
#include "comptll/jpeg.hpp"

namespace comptll {
namespace {

using Kind = FormatError::Kind;

bool is_rst(std::uint8_t code) { return code >= 0xD0 && code <= 0xD7; }

// Reads entropy-coded bits, undoing 0xFF00 stuffing. Stops at the first
// marker or at end of buffer and pads with zero bits from there; consuming a
// padding bit marks the reader as overrun.
class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos)
      : data_(data), pos_(pos) {}

  unsigned peek(int n) {
    while (nbits_ < n) load_byte();
    return static_cast<unsigned>((acc_ >> (nbits_ - n)) & ((1ull << n) - 1));
  }

  void consume(int n) {
    nbits_ -= n;
    if (nbits_ < pad_bits_) {
      overrun_ = true;
      pad_bits_ = nbits_;
    }
  }

  unsigned read(int n) {
    if (n == 0) return 0;
    const unsigned v = peek(n);
    consume(n);
    return v;
  }

  bool overrun() const { return overrun_; }
  bool at_marker() const { return marker_; }
  bool at_eof() const { return eof_; }
  std::size_t marker_pos() const { return marker_pos_; }

  // Approximate offset of the next unread entropy byte.
  std::size_t offset() const {
    const int real = nbits_ - pad_bits_;
    return pos_ - static_cast<std::size_t>(std::max(real, 0) / 8);
  }

  // Discards buffered bits and moves past the restart marker the reader is
  // parked on. Returns false if it is not parked on an RSTn marker.
  bool skip_restart_marker() {
    if (!marker_ || !is_rst(data_[marker_pos_ + 1])) return false;
    pos_ = marker_pos_ + 2;
    acc_ = 0;
    nbits_ = 0;
    pad_bits_ = 0;
    marker_ = false;
    return true;
  }

  // Offset of the marker that terminates the entropy-coded segment.
  std::optional<std::size_t> next_marker() const {
    if (marker_) return marker_pos_;
    for (std::size_t p = pos_; p + 1 < data_.size(); ++p) {
      if (data_[p] == 0xFF && data_[p + 1] != 0x00 && data_[p + 1] != 0xFF) {
        return p;
      }
    }
    return std::nullopt;
  }

 private:
  void load_byte() {
    std::uint8_t byte = 0;
    if (marker_ || eof_) {
      pad_bits_ += 8;
    } else if (pos_ >= data_.size()) {
      eof_ = true;
      pad_bits_ += 8;
    } else if (data_[pos_] != 0xFF) {
      byte = data_[pos_++];
    } else if (pos_ + 1 >= data_.size()) {
      eof_ = true;
      pad_bits_ += 8;
    } else if (data_[pos_ + 1] == 0x00) {
      byte = 0xFF;
      pos_ += 2;
    } else if (data_[pos_ + 1] == 0xFF) {
      ++pos_;  // fill byte preceding a marker
      load_byte();
      return;
    } else {
      marker_ = true;
      marker_pos_ = pos_;
      pad_bits_ += 8;
    }
    acc_ = (acc_ << 8) | byte;
    nbits_ += 8;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint64_t acc_ = 0;
  int nbits_ = 0;
  int pad_bits_ = 0;
  bool marker_ = false;
  bool eof_ = false;
  bool overrun_ = false;
  std::size_t marker_pos_ = 0;
};

int extend(unsigned bits, int category) {
  if (category == 0) return 0;
  const int v = static_cast<int>(bits);
  return v < (1 << (category - 1)) ? v - (1 << category) + 1 : v;
}

struct FrameInfo {
  int width = 0;
  int height = 0;
  int component_id = 0;
  int quant_table = 0;
};

class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> s) : s_(s) {}

  QuantizedBlockGrid run() {
    if (s_.size() < 2 || s_[0] != 0xFF || s_[1] != 0xD8) {
      throw FormatError(Kind::kInvalidMarker, 0, "stream does not start with SOI");
    }
    pos_ = 2;
    bool scanned = false;
    for (;;) {
      const std::size_t marker_at = pos_;
      const std::uint8_t code = read_marker();
      if (code == 0xD9) {  // EOI
        if (!scanned) {
          throw FormatError(Kind::kMalformed, marker_at, "EOI before any scan");
        }
        return std::move(grid_);
      }
      if (scanned && code == 0xDA) {
        throw FormatError(Kind::kUnsupported, marker_at,
                          "multiple scans in a single-component stream");
      }
      switch (code) {
        case 0xDB: parse_dqt(); break;
        case 0xC4: parse_dht(); break;
        case 0xC0:
        case 0xC1: parse_sof(marker_at); break;
        case 0xDD: parse_dri(); break;
        case 0xDA:
          parse_sos(marker_at);
          decode_scan();
          scanned = true;
          break;
        case 0xC2: case 0xC3: case 0xC5: case 0xC6: case 0xC7: case 0xC9:
        case 0xCA: case 0xCB: case 0xCD: case 0xCE: case 0xCF:
          throw FormatError(Kind::kUnsupported, marker_at,
                            "only baseline sequential Huffman JPEG is supported");
        case 0xCC:
          throw FormatError(Kind::kUnsupported, marker_at, "arithmetic coding");
        case 0xDC:
          throw FormatError(Kind::kUnsupported, marker_at, "DNL marker");
        default:
          if ((code >= 0xE0 && code <= 0xEF) || code == 0xFE) {
            skip_segment();
          } else {
            throw FormatError(Kind::kInvalidMarker, marker_at,
                              "unexpected marker 0xFF" + hex(code));
          }
      }
    }
  }

 private:
  static std::string hex(std::uint8_t v) {
    static const char* digits = "0123456789ABCDEF";
    return {digits[v >> 4], digits[v & 15]};
  }

  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) {
      throw FormatError(Kind::kTruncated, s_.size(), "stream ends inside a segment");
    }
  }

  std::uint8_t u8() {
    need(1);
    return s_[pos_++];
  }

  unsigned u16() {
    need(2);
    const unsigned v = (static_cast<unsigned>(s_[pos_]) << 8) | s_[pos_ + 1];
    pos_ += 2;
    return v;
  }

  std::uint8_t read_marker() {
    if (pos_ >= s_.size()) {
      throw FormatError(Kind::kTruncated, s_.size(), "missing EOI");
    }
    if (s_[pos_] != 0xFF) {
      throw FormatError(Kind::kInvalidMarker, pos_, "expected marker, found 0x" + hex(s_[pos_]));
    }
    while (pos_ < s_.size() && s_[pos_] == 0xFF) ++pos_;
    if (pos_ >= s_.size()) {
      throw FormatError(Kind::kTruncated, s_.size(), "stream ends inside a marker");
    }
    const std::uint8_t code = s_[pos_++];
    if (code == 0x00 || code == 0xD8 || is_rst(code)) {
      throw FormatError(Kind::kInvalidMarker, pos_ - 2,
                        "marker 0xFF" + hex(code) + " not allowed here");
    }
    return code;
  }

  // Reads a segment length and returns the end offset of the segment.
  std::size_t segment_end() {
    const std::size_t at = pos_;
    const unsigned len = u16();
    if (len < 2) throw FormatError(Kind::kMalformed, at, "segment length < 2");
    need(len - 2);
    return at + len;
  }

  void skip_segment() { pos_ = segment_end(); }

  void parse_dqt() {
    const std::size_t end = segment_end();
    while (pos_ < end) {
      const std::size_t at = pos_;
      const std::uint8_t pq_tq = u8();
      const int precision = pq_tq >> 4;
      const int id = pq_tq & 15;
      if (precision > 1 || id > 3) {
        throw FormatError(Kind::kMalformed, at, "bad DQT precision/table id");
      }
      if (end - pos_ < static_cast<std::size_t>(kBlockSize * (precision + 1))) {
        throw FormatError(Kind::kMalformed, at, "DQT table overruns segment");
      }
      std::array<std::uint16_t, kBlockSize> q{};
      for (int k = 0; k < kBlockSize; ++k) {
        const unsigned v = precision == 0 ? u8() : u16();
        if (v == 0) throw FormatError(Kind::kMalformed, pos_, "zero quantizer");
        q[kZigzag[k]] = static_cast<std::uint16_t>(v);
      }
      qt_[id] = q;
    }
    if (pos_ != end) throw FormatError(Kind::kMalformed, pos_, "DQT length mismatch");
  }

  void parse_dht() {
    const std::size_t end = segment_end();
    while (pos_ < end) {
      const std::size_t at = pos_;
      const std::uint8_t tc_th = u8();
      const int tc = tc_th >> 4;
      const int th = tc_th & 15;
      if (tc > 1 || th > 3) {
        throw FormatError(Kind::kMalformed, at, "bad DHT class/table id");
      }
      HuffmanSpec spec;
      std::size_t total = 0;
      if (end - pos_ < 16) throw FormatError(Kind::kMalformed, at, "DHT overruns segment");
      for (auto& b : spec.bits) {
        b = u8();
        total += b;
      }
      if (end - pos_ < total) {
        throw FormatError(Kind::kMalformed, at, "DHT symbols overrun segment");
      }
      spec.values.resize(total);
      for (auto& v : spec.values) v = u8();
      if (!is_valid_spec(spec)) {
        throw FormatError(Kind::kBadHuffmanCode, at, "DHT table violates Kraft inequality");
      }
      (tc == 0 ? dc_ : ac_)[th].emplace(spec);
    }
    if (pos_ != end) throw FormatError(Kind::kMalformed, pos_, "DHT length mismatch");
  }

  void parse_sof(std::size_t marker_at) {
    if (frame_) throw FormatError(Kind::kMalformed, marker_at, "duplicate SOF");
    const std::size_t end = segment_end();
    FrameInfo f;
    if (u8() != 8) {
      throw FormatError(Kind::kUnsupported, pos_ - 1, "only 8-bit precision is supported");
    }
    f.height = static_cast<int>(u16());
    f.width = static_cast<int>(u16());
    if (f.height == 0) throw FormatError(Kind::kUnsupported, pos_ - 4, "DNL-defined height");
    if (f.width == 0) throw FormatError(Kind::kMalformed, pos_ - 2, "zero width");
    const int nf = u8();
    if (nf != 1) {
      throw FormatError(Kind::kUnsupported, pos_ - 1,
                        "only single-component (grayscale) streams are supported");
    }
    f.component_id = u8();
    u8();  // sampling factors are irrelevant for one component
    f.quant_table = u8();
    if (f.quant_table > 3) throw FormatError(Kind::kMalformed, pos_ - 1, "bad quant table id");
    if (pos_ != end) throw FormatError(Kind::kMalformed, pos_, "SOF length mismatch");
    frame_ = f;
  }

  void parse_dri() {
    const std::size_t end = segment_end();
    restart_interval_ = static_cast<int>(u16());
    if (pos_ != end) throw FormatError(Kind::kMalformed, pos_, "DRI length mismatch");
  }

  void parse_sos(std::size_t marker_at) {
    if (!frame_) throw FormatError(Kind::kMalformed, marker_at, "SOS before SOF");
    const std::size_t end = segment_end();
    if (u8() != 1) {
      throw FormatError(Kind::kUnsupported, pos_ - 1, "scan must contain one component");
    }
    if (u8() != frame_->component_id) {
      throw FormatError(Kind::kMalformed, pos_ - 1, "scan references unknown component");
    }
    const std::uint8_t tables = u8();
    dc_id_ = tables >> 4;
    ac_id_ = tables & 15;
    const int ss = u8();
    const int se = u8();
    const int ahal = u8();
    if (ss != 0 || se != 63 || ahal != 0) {
      throw FormatError(Kind::kUnsupported, pos_ - 3, "non-baseline spectral selection");
    }
    if (pos_ != end) throw FormatError(Kind::kMalformed, pos_, "SOS length mismatch");
    if (dc_id_ > 3 || ac_id_ > 3 || !dc_[dc_id_] || !ac_[ac_id_]) {
      throw FormatError(Kind::kMalformed, marker_at, "scan references undefined Huffman table");
    }
    if (!qt_[frame_->quant_table]) {
      throw FormatError(Kind::kMalformed, marker_at, "frame references undefined quant table");
    }
  }

  int decode_symbol(BitReader& br, const HuffmanDecoder& h) {
    const unsigned peek = br.peek(16);
    const auto& e = h.lookup(peek >> (16 - HuffmanDecoder::kLookupBits));
    if (e.length != 0) {
      br.consume(e.length);
      return e.symbol;
    }
    for (int len = HuffmanDecoder::kLookupBits + 1; len <= 16; ++len) {
      if (auto sym = h.match(len, peek >> (16 - len))) {
        br.consume(len);
        return *sym;
      }
    }
    throw FormatError(Kind::kBadHuffmanCode, br.offset(), "no Huffman code matches");
  }

  void check_overrun(const BitReader& br) const {
    if (!br.overrun()) return;
    if (br.at_eof()) {
      throw FormatError(Kind::kTruncated, s_.size(), "entropy-coded data ends early");
    }
    throw FormatError(Kind::kTruncated, br.marker_pos(),
                      "entropy-coded data ends at a marker before all blocks");
  }

  void decode_block(BitReader& br, int& pred, QuantBlock& out) {
    const auto& dc = *dc_[dc_id_];
    const auto& ac = *ac_[ac_id_];
    std::array<int, kBlockSize> scan{};
    const int t = decode_symbol(br, dc);
    if (t > 11) throw FormatError(Kind::kBadHuffmanCode, br.offset(), "DC category > 11");
    pred += extend(br.read(t), t);
    if (pred < QuantBlock::kMinQuant || pred > QuantBlock::kMaxQuant) {
      throw FormatError(Kind::kMalformed, br.offset(), "DC coefficient out of range");
    }
    scan[0] = pred;
    for (int k = 1; k < kBlockSize;) {
      const int rs = decode_symbol(br, ac);
      const int run = rs >> 4;
      const int size = rs & 15;
      if (size == 0) {
        if (run == 15) {
          k += 16;
          if (k > kBlockSize) {
            throw FormatError(Kind::kMalformed, br.offset(), "zero run past end of block");
          }
          continue;
        }
        if (run != 0) {
          throw FormatError(Kind::kBadHuffmanCode, br.offset(), "invalid AC run/size symbol");
        }
        break;  // EOB
      }
      if (size > 10) {
        throw FormatError(Kind::kBadHuffmanCode, br.offset(), "AC category > 10");
      }
      k += run;
      if (k >= kBlockSize) {
        throw FormatError(Kind::kMalformed, br.offset(), "AC index past end of block");
      }
      scan[k++] = extend(br.read(size), size);
    }
    check_overrun(br);
    out = from_zigzag(scan);
  }

  void decode_scan() {
    const FrameInfo& f = *frame_;
    QuantTable table;
    table.q = *qt_[f.quant_table];
    table.quality = infer_quality(table.q);
    grid_ = QuantizedBlockGrid::for_image(f.width, f.height, table);

    BitReader br(s_, pos_);
    int pred = 0;
    const std::size_t n = grid_.blocks.size();
    for (std::size_t b = 0; b < n; ++b) {
      if (restart_interval_ > 0 && b > 0 &&
          b % static_cast<std::size_t>(restart_interval_) == 0) {
        // Remaining bits before a restart marker are byte-alignment padding.
        br.peek(8);
        if (!br.skip_restart_marker()) {
          throw FormatError(Kind::kInvalidMarker, br.offset(), "expected RST marker");
        }
        pred = 0;
      }
      decode_block(br, pred, grid_.blocks[b]);
    }
    const auto next = br.next_marker();
    if (!next) throw FormatError(Kind::kTruncated, s_.size(), "missing EOI");
    pos_ = *next;
  }

  std::span<const std::uint8_t> s_;
  std::size_t pos_ = 0;
  std::array<std::optional<std::array<std::uint16_t, kBlockSize>>, 4> qt_;
  std::array<std::optional<HuffmanDecoder>, 4> dc_;
  std::array<std::optional<HuffmanDecoder>, 4> ac_;
  std::optional<FrameInfo> frame_;
  int restart_interval_ = 0;
  int dc_id_ = 0;
  int ac_id_ = 0;
  QuantizedBlockGrid grid_;
};

}  // namespace

QuantizedBlockGrid partial_decode(std::span<const std::uint8_t> stream) {
  return Decoder(stream).run();
}

GrayImage reconstruct_image(const QuantizedBlockGrid& grid) {
  grid.validate();
  GrayImage img(grid.orig_width, grid.orig_height);
  for (int by = 0; by < grid.blocks_h; ++by) {
    for (int bx = 0; bx < grid.blocks_w; ++bx) {
      const PixelBlock px =
          idct(dequantize(grid.at(bx, by), grid.table), LevelShift::kOn);
      const int y0 = by * kBlockSide;
      const int x0 = bx * kBlockSide;
      const int rows = std::min(kBlockSide, grid.orig_height - y0);
      const int cols = std::min(kBlockSide, grid.orig_width - x0);
      for (int i = 0; i < rows; ++i) {
        std::copy_n(px.samples.begin() + i * kBlockSide, cols,
                    img.samples.begin() +
                        static_cast<std::ptrdiff_t>(img.index(x0, y0 + i)));
      }
    }
  }
  return img;
}

GrayImage full_decode(std::span<const std::uint8_t> stream) {
  return reconstruct_image(partial_decode(stream));
}

}  // namespace comptll
