#include <string>

#include "binio.hpp"
#include "comptll/error.hpp"
#include "comptll/image.hpp"
#include "comptll/unet.hpp"

namespace comptll {
namespace {

using Kind = FormatError::Kind;
constexpr std::uint8_t kCheckpointVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const UNetParams& params) {
  binio::Writer w;
  w.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("CTLU"), 4));
  w.u8(kCheckpointVersion);
  const UNetConfig& c = params.config;
  w.u32(static_cast<std::uint32_t>(c.input_side));
  w.u32(static_cast<std::uint32_t>(c.base_channels));
  w.u32(static_cast<std::uint32_t>(c.depth));
  w.u8(static_cast<std::uint8_t>(c.pool_mode));
  w.f64(c.dropout_rate);
  w.f64(c.width_mult);
  w.u32(static_cast<std::uint32_t>(c.first_kernel));
  w.u32(static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (int d : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.tensor.data()) w.f32(v);
  }
  return w.take();
}

UNetParams deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  r.expect_magic("CTLU");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError(Kind::kUnsupported, 4, "checkpoint version " + std::to_string(version));
  }
  UNetConfig c;
  c.input_side = static_cast<int>(r.u32());
  c.base_channels = static_cast<int>(r.u32());
  c.depth = static_cast<int>(r.u32());
  const std::uint8_t pool = r.u8();
  if (pool > 1) throw FormatError(Kind::kMalformed, r.pos() - 1, "bad pool mode");
  c.pool_mode = static_cast<PoolMode>(pool);
  c.dropout_rate = r.f64();
  c.width_mult = r.f64();
  c.first_kernel = static_cast<int>(r.u32());
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw FormatError(Kind::kMalformed, 5, std::string("checkpoint config: ") + e.what());
  }

  // The layer plan implied by the config defines the expected records.
  UNetParams params = build(c, 0);
  const std::uint32_t count = r.u32();
  if (count != params.tensors.size()) {
    throw FormatError(Kind::kSizeMismatch, r.pos() - 4,
                      "checkpoint has " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(params.tensors.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::string name = r.str();
    NamedTensor& slot = params.tensors[i];
    if (name != slot.name) {
      throw FormatError(Kind::kSizeMismatch, at,
                        "expected tensor " + slot.name + ", found " + name);
    }
    const std::uint32_t rank = r.u32();
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank && d < 8; ++d) shape.push_back(static_cast<int>(r.u32()));
    if (rank > 8 || shape != slot.tensor.shape()) {
      throw FormatError(Kind::kSizeMismatch, at,
                        "tensor " + name + " shape does not match config");
    }
    r.need(slot.tensor.numel() * 4);
    for (auto& v : slot.tensor.data()) v = r.f32();
  }
  if (!r.done()) {
    throw FormatError(Kind::kSizeMismatch, r.pos(), "trailing bytes after checkpoint");
  }
  return params;
}

void save_checkpoint(const UNetParams& params, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(params));
}

UNetParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace comptll
