#include <algorithm>
#include <random>

#include "comptll/error.hpp"
#include "comptll/huffman.hpp"
#include "comptll/image.hpp"
#include "comptll/jpeg.hpp"
#include "doctest.h"
#include "libjpeg_oracle.hpp"
#include "test_util.hpp"

using namespace comptll;

namespace {

struct Segments {
  std::size_t scan_begin = 0;  // first entropy-coded byte
  std::size_t scan_end = 0;    // position of EOI
};

Segments locate_scan(const JpegStream& s) {
  for (std::size_t i = 2; i + 3 < s.size();) {
    REQUIRE(s[i] == 0xFF);
    const std::uint8_t m = s[i + 1];
    const std::size_t len = (static_cast<std::size_t>(s[i + 2]) << 8) | s[i + 3];
    if (m == 0xDA) {
      Segments seg;
      seg.scan_begin = i + 2 + len;
      seg.scan_end = s.size() - 2;
      return seg;
    }
    i += 2 + len;
  }
  FAIL("no SOS");
  return {};
}

std::size_t find_marker(const JpegStream& s, std::uint8_t marker) {
  for (std::size_t i = 2; i + 3 < s.size();) {
    if (s[i + 1] == marker) return i;
    if (s[i + 1] == 0xDA) break;
    i += 2 + ((static_cast<std::size_t>(s[i + 2]) << 8) | s[i + 3]);
  }
  return std::string::npos;
}

JpegStream with_scan(const JpegStream& headers_from, const std::vector<std::uint8_t>& data) {
  const Segments seg = locate_scan(headers_from);
  JpegStream out(headers_from.begin(), headers_from.begin() + static_cast<long>(seg.scan_begin));
  out.insert(out.end(), data.begin(), data.end());
  out.push_back(0xFF);
  out.push_back(0xD9);
  return out;
}

FormatError::Kind kind_of(const JpegStream& s) {
  try {
    partial_decode(s);
  } catch (const FormatError& e) {
    return e.kind();
  }
  FAIL("stream was accepted");
  return FormatError::Kind::kMalformed;
}

}  // namespace

TEST_SUITE("jpeg_codec") {
  TEST_CASE("uniform images") {
    const JpegStream s128 = encode(GrayImage(8, 8, 128), 50);
    const auto g128 = partial_decode(s128);
    REQUIRE(g128.blocks.size() == 1);
    CHECK(g128.blocks[0].coeffs == QuantBlock{}.coeffs);
    CHECK(full_decode(s128) == GrayImage(8, 8, 128));

    const auto g244 = partial_decode(encode(GrayImage(8, 8, 244), 50));
    CHECK(g244.blocks[0].coeffs[0] == 58);
    for (int k = 1; k < 64; ++k) CHECK(g244.blocks[0].coeffs[k] == 0);
  }

  TEST_CASE("stream framing") {
    const JpegStream s = encode(testutil::smooth_image(40, 24, 1), 50);
    CHECK(s[0] == 0xFF);
    CHECK(s[1] == 0xD8);
    CHECK(s[s.size() - 2] == 0xFF);
    CHECK(s.back() == 0xD9);
    for (std::uint8_t m : {0xE0, 0xDB, 0xC0, 0xC4}) CHECK(find_marker(s, m) != std::string::npos);
    CHECK(find_marker(s, 0xDD) == std::string::npos);  // no restart interval emitted
    CHECK(s[find_marker(s, 0xC0) + 4] == 8);             // 8-bit precision
    CHECK(s[find_marker(s, 0xC0) + 9] == 1);             // one component
  }

  TEST_CASE("encoder output equals quantize_image") {
    for (int seed = 0; seed < 10; ++seed) {
      const int w = 8 + seed * 13, h = 8 + seed * 7;
      const GrayImage img = testutil::smooth_image(w, h, seed);
      for (int q : {10, 50, 95}) CHECK(partial_decode(encode(img, q)) == quantize_image(img, q));
    }
  }

  TEST_CASE("edge blocks replicate the last row and column") {
    GrayImage img(9, 9, 0);
    for (int y = 0; y < 9; ++y) img.at(8, y) = 200;
    for (int x = 0; x < 9; ++x) img.at(x, 8) = 200;
    const auto grid = quantize_image(img, 100);
    CHECK(grid.blocks_w == 2);
    CHECK(grid.blocks_h == 2);
    // The bottom-right block sees only replicated 200s.
    const auto& corner = grid.at(1, 1);
    CHECK(corner.coeffs[0] == 8 * (200 - 128));
    for (int k = 1; k < 64; ++k) CHECK(corner.coeffs[k] == 0);
  }

  TEST_CASE("entropy coding is bijective on random grids") {
    for (int seed = 0; seed < 200; ++seed) {
      const int w = 1 + seed % 37 * 3, h = 1 + seed % 23 * 5;
      const auto grid = testutil::random_grid(w, h, seed);
      const JpegStream s = encode_grid(grid);
      auto back = partial_decode(s);
      CHECK(back.blocks == grid.blocks);
      CHECK(back.orig_width == w);
      CHECK(back.orig_height == h);
      CHECK(back.table.q == grid.table.q);
    }
  }

  TEST_CASE("extreme coefficients") {
    auto grid = QuantizedBlockGrid::for_image(16, 8, scale_quant_table(standard_luma_table(), 50));
    grid.blocks[0].coeffs[0] = 1023;
    grid.blocks[1].coeffs[0] = -1024;  // DC difference -2047
    grid.blocks[0].coeffs[63] = 1023;
    grid.blocks[1].coeffs[1] = -1023;
    CHECK(partial_decode(encode_grid(grid)).blocks == grid.blocks);

    grid.blocks[0].coeffs[5] = 1024;
    CHECK_THROWS_AS(encode_grid(grid), DomainError);
    grid.blocks[0].coeffs[5] = 0;
    grid.blocks[0].coeffs[0] = 1100;
    grid.blocks[1].coeffs[0] = -1000;  // difference -2100
    CHECK_THROWS_AS(encode_grid(grid), DomainError);
  }

  TEST_CASE("long zero runs use ZRL") {
    auto grid = QuantizedBlockGrid::for_image(8, 8, scale_quant_table(standard_luma_table(), 50));
    grid.blocks[0].coeffs[kZigzag[40]] = 3;
    grid.blocks[0].coeffs[kZigzag[63]] = -1;
    CHECK(partial_decode(encode_grid(grid)).blocks == grid.blocks);
  }

  TEST_CASE("DC differences telescope to the last DC") {
    const auto grid = testutil::random_grid(64, 64, 9);
    const auto back = partial_decode(encode_grid(grid));
    long sum = 0;
    int prev = 0;
    for (const auto& b : back.blocks) {
      sum += b.coeffs[0] - prev;
      prev = b.coeffs[0];
    }
    CHECK(sum == back.blocks.back().coeffs[0]);
  }

  TEST_CASE("hand-built scan: one block with DC difference 122") {
    // DC category 7 -> code 11110, then 1111010 (122), then AC EOB 1010.
    const JpegStream headers = encode(GrayImage(8, 8, 128), 50);
    const JpegStream s = with_scan(headers, {0xF7, 0xAA});
    const auto grid = partial_decode(s);
    CHECK(grid.blocks[0].coeffs[0] == 122);
    for (int k = 1; k < 64; ++k) CHECK(grid.blocks[0].coeffs[k] == 0);
    CHECK(oracle::libjpeg_decode(s) == full_decode(s));
  }

  TEST_CASE("byte stuffing") {
    for (int seed = 0; seed < 20; ++seed) {
      const JpegStream s = encode(testutil::noise_image(64, 64, seed), 90);
      const Segments seg = locate_scan(s);
      int ff = 0;
      for (std::size_t i = seg.scan_begin; i < seg.scan_end; ++i) {
        if (s[i] == 0xFF) {
          ++ff;
          REQUIRE(i + 1 < seg.scan_end);
          CHECK(s[i + 1] == 0x00);
          ++i;
        }
      }
      CHECK(ff > 0);
    }
  }

  TEST_CASE("full_decode equals dequantize + idct of partial_decode") {
    for (int seed = 0; seed < 10; ++seed) {
      const JpegStream s = encode(testutil::smooth_image(50 + seed, 30 + 2 * seed, seed), 60);
      CHECK(full_decode(s) == reconstruct_image(partial_decode(s)));
    }
    CHECK(full_decode(encode(GrayImage(33, 17, 128), 50)) == GrayImage(33, 17, 128));
  }

  TEST_CASE("third-party decoder agrees within one gray level") {
    for (int seed = 0; seed < 20; ++seed) {
      const GrayImage img = seed % 2 ? testutil::noise_image(61, 45, seed)
                                     : testutil::smooth_image(128, 96, seed);
      const JpegStream s = encode(img, 20 + 4 * seed);
      const GrayImage ours = full_decode(s);
      const GrayImage ref = oracle::libjpeg_decode(s);
      REQUIRE(ours.width == ref.width);
      REQUIRE(ours.height == ref.height);
      int worst = 0;
      for (std::size_t i = 0; i < ours.samples.size(); ++i) {
        worst = std::max(worst, std::abs(ours.samples[i] - ref.samples[i]));
      }
      CHECK(worst <= 1);
    }
  }

  TEST_CASE("high quality round trip keeps PSNR above 40 dB") {
    for (int seed = 0; seed < 10; ++seed) {
      const GrayImage img = testutil::smooth_image(96, 80, seed);
      CHECK(psnr(img, full_decode(encode(img, 95))) >= 40.0);
    }
  }

  TEST_CASE("restart markers are honoured") {
    const GrayImage img = testutil::smooth_image(16, 8, 3);
    GrayImage left(8, 8), right(8, 8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        left.at(x, y) = img.at(x, y);
        right.at(x, y) = img.at(x + 8, y);
      }
    }
    const JpegStream a = encode(left, 50), b = encode(right, 50);
    const Segments sa = locate_scan(a), sb = locate_scan(b);
    std::vector<std::uint8_t> data(a.begin() + static_cast<long>(sa.scan_begin),
                                   a.begin() + static_cast<long>(sa.scan_end));
    data.push_back(0xFF);
    data.push_back(0xD0);
    data.insert(data.end(), b.begin() + static_cast<long>(sb.scan_begin),
                b.begin() + static_cast<long>(sb.scan_end));
    JpegStream s = with_scan(encode(img, 50), data);
    const std::size_t sos = find_marker(s, 0xDA);
    const std::uint8_t dri[] = {0xFF, 0xDD, 0x00, 0x04, 0x00, 0x01};
    s.insert(s.begin() + static_cast<long>(sos), std::begin(dri), std::end(dri));
    CHECK(partial_decode(s) == quantize_image(img, 50));
    CHECK(oracle::libjpeg_decode(s) == full_decode(s));
  }

  TEST_CASE("malformed streams raise distinct errors with offsets") {
    const JpegStream good = encode(testutil::smooth_image(64, 64, 5), 50);

    JpegStream cut(good.begin(), good.begin() + static_cast<long>(good.size() / 2));
    CHECK(kind_of(cut) == FormatError::Kind::kTruncated);
    JpegStream header_only(good.begin(), good.begin() + 30);
    CHECK(kind_of(header_only) == FormatError::Kind::kTruncated);

    JpegStream no_soi = good;
    no_soi[1] = 0x00;
    CHECK(kind_of(no_soi) == FormatError::Kind::kInvalidMarker);

    JpegStream bad_code = with_scan(good, {0xFF, 0x00, 0xFF, 0x00, 0xFF, 0x00});
    CHECK(kind_of(bad_code) == FormatError::Kind::kBadHuffmanCode);

    JpegStream progressive = good;
    progressive[find_marker(good, 0xC0) + 1] = 0xC2;
    CHECK(kind_of(progressive) == FormatError::Kind::kUnsupported);

    JpegStream arithmetic = good;
    arithmetic[find_marker(good, 0xC0) + 1] = 0xC9;
    CHECK(kind_of(arithmetic) == FormatError::Kind::kUnsupported);

    try {
      partial_decode(cut);
    } catch (const FormatError& e) {
      CHECK(e.offset() > 0);
      CHECK(e.offset() <= cut.size());
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    CHECK_THROWS_AS(partial_decode(JpegStream{}), FormatError);
  }

  TEST_CASE("encode rejects empty images and bad quality") {
    CHECK_THROWS_AS(encode(GrayImage(), 50), DomainError);
    CHECK_THROWS_AS(encode(GrayImage(8, 8), 0), DomainError);
    CHECK_THROWS_AS(encode(GrayImage(8, 8), 101), DomainError);
  }

  TEST_CASE("huffman tables") {
    CHECK(is_valid_spec(standard_dc_luma_spec()));
    CHECK(is_valid_spec(standard_ac_luma_spec()));
    HuffmanSpec over = standard_dc_luma_spec();
    over.bits[0] = 3;  // three 1-bit codes cannot exist
    over.values.insert(over.values.begin(), {0, 0, 0});
    CHECK_FALSE(is_valid_spec(over));
    const HuffmanEncoder enc(standard_dc_luma_spec());
    CHECK(enc.length(7) == 5);
    CHECK(enc.code(7) == 0b11110);
    CHECK(enc.length(0) == 2);
    CHECK(enc.code(0) == 0);
  }
}

TEST_SUITE("jpeg_codec") {
  TEST_CASE("QDB container round trip") {
    testutil::TempDir dir("qdb");
    for (int seed = 0; seed < 20; ++seed) {
      const auto grid = testutil::random_grid(1 + seed * 11, 1 + seed * 5, seed);
      CHECK(deserialize_qdb(serialize_qdb(grid)) == grid);
    }
    const auto zeros = QuantizedBlockGrid::for_image(24, 16, standard_luma_table());
    write_qdb_file(zeros, dir / "z.qdb");
    CHECK(read_qdb_file(dir / "z.qdb") == zeros);
  }

  TEST_CASE("QDB size arithmetic") {
    const auto grid = QuantizedBlockGrid::for_image(512, 512, standard_luma_table());
    const auto bytes = serialize_qdb(grid);
    CHECK(kQdbHeaderBytes == 143);
    CHECK(bytes.size() == 64u * 64u * 64u * 2u + 143u);
    CHECK(bytes[0] == 'Q');
    CHECK(bytes[3] == '1');
  }

  TEST_CASE("QDB errors") {
    const auto bytes = serialize_qdb(testutil::random_grid(32, 32, 1));
    auto bad = bytes;
    bad[0] = 'X';
    try {
      deserialize_qdb(bad);
      FAIL("accepted bad magic");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::kBadMagic);
    }
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 10);
    try {
      deserialize_qdb(cut);
      FAIL("accepted truncated container");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::kTruncated);
    }
    auto longer = bytes;
    longer.push_back(0);
    longer.push_back(0);
    try {
      deserialize_qdb(longer);
      FAIL("accepted trailing bytes");
    } catch (const FormatError& e) {
      CHECK(e.kind() == FormatError::Kind::kSizeMismatch);
    }
    CHECK_THROWS_AS(read_qdb_file("/nonexistent/x.qdb"), IoError);
  }

  TEST_CASE("PGM round trip and parsing") {
    const GrayImage img = testutil::noise_image(17, 9, 4);
    CHECK(decode_pgm(encode_pgm(img)) == img);
    const std::string commented = "P5\n# made by hand\n2 1\n# another\n255\n";
    std::vector<std::uint8_t> bytes(commented.begin(), commented.end());
    bytes.push_back(7);
    bytes.push_back(9);
    const GrayImage g = decode_pgm(bytes);
    CHECK(g.width == 2);
    CHECK(g.at(1, 0) == 9);
    const std::string wide = "P5 2 1 65535\n";
    std::vector<std::uint8_t> w(wide.begin(), wide.end());
    w.resize(w.size() + 4, 0);
    CHECK_THROWS_AS(decode_pgm(w), DomainError);
    const std::string p2 = "P2 1 1 255\n0\n";
    CHECK_THROWS_AS(decode_pgm(std::vector<std::uint8_t>(p2.begin(), p2.end())), DomainError);
    CHECK_THROWS_AS(read_pgm("/nonexistent/a.pgm"), IoError);
  }
}
