#include <cstring>

#include "comptll/error.hpp"
#include "comptll/jpeg.hpp"

namespace comptll {
namespace {

using Kind = FormatError::Kind;
constexpr std::uint8_t kQdbVersion = 1;

void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_le(std::span<const std::uint8_t> b, std::size_t at, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_qdb(const QuantizedBlockGrid& grid) {
  grid.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kQdbHeaderBytes + grid.blocks.size() * kBlockSize * 2);
  out.insert(out.end(), {'Q', 'D', 'B', '1'});
  out.push_back(kQdbVersion);
  put_le(out, static_cast<std::uint32_t>(grid.orig_width), 4);
  put_le(out, static_cast<std::uint32_t>(grid.orig_height), 4);
  put_le(out, static_cast<std::uint32_t>(grid.table.quality), 2);
  for (auto q : grid.table.q) put_le(out, q, 2);
  for (const auto& block : grid.blocks) {
    for (auto c : block.coeffs) put_le(out, static_cast<std::uint16_t>(c), 2);
  }
  return out;
}

QuantizedBlockGrid deserialize_qdb(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "QDB1", 4) != 0) {
    throw FormatError(Kind::kBadMagic, 0, "not a QDB1 container");
  }
  if (bytes.size() < kQdbHeaderBytes) {
    throw FormatError(Kind::kTruncated, bytes.size(), "QDB header");
  }
  if (bytes[4] != kQdbVersion) {
    throw FormatError(Kind::kUnsupported, 4, "QDB version " + std::to_string(bytes[4]));
  }
  const std::uint32_t w = get_le(bytes, 5, 4);
  const std::uint32_t h = get_le(bytes, 9, 4);
  if (w < 1 || h < 1 || w > 0xFFFF || h > 0xFFFF) {
    throw FormatError(Kind::kMalformed, 5, "QDB dimensions out of range");
  }
  QuantTable table;
  table.quality = static_cast<int>(get_le(bytes, 13, 2));
  for (int k = 0; k < kBlockSize; ++k) {
    table.q[k] = static_cast<std::uint16_t>(get_le(bytes, 15 + 2 * k, 2));
    if (table.q[k] == 0) throw FormatError(Kind::kMalformed, 15 + 2 * k, "zero quantizer");
  }
  QuantizedBlockGrid g =
      QuantizedBlockGrid::for_image(static_cast<int>(w), static_cast<int>(h), table);
  const std::size_t expect = kQdbHeaderBytes + g.blocks.size() * kBlockSize * 2;
  if (bytes.size() < expect) {
    throw FormatError(Kind::kTruncated, bytes.size(),
                      "QDB payload needs " + std::to_string(expect) + " bytes");
  }
  if (bytes.size() > expect) {
    throw FormatError(Kind::kSizeMismatch, expect, "trailing bytes after QDB payload");
  }
  std::size_t at = kQdbHeaderBytes;
  for (auto& block : g.blocks) {
    for (auto& c : block.coeffs) {
      const auto v = static_cast<std::int16_t>(get_le(bytes, at, 2));
      if (v < QuantBlock::kMinQuant || v > QuantBlock::kMaxQuant) {
        throw FormatError(Kind::kMalformed, at, "coefficient outside 12-bit range");
      }
      c = v;
      at += 2;
    }
  }
  return g;
}

void write_qdb_file(const QuantizedBlockGrid& grid, const std::filesystem::path& path) {
  write_file(path, serialize_qdb(grid));
}

QuantizedBlockGrid read_qdb_file(const std::filesystem::path& path) {
  return deserialize_qdb(read_file(path));
}

}  // namespace comptll
