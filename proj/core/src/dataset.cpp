#include "comptll/dataset.hpp"

#include "comptll/coeff_plane.hpp"
#include "comptll/docgen.hpp"
#include "comptll/error.hpp"

namespace comptll {

Sample make_sample(std::string id, std::span<const std::uint8_t> jpeg,
                   const BinaryMask& mask, int side) {
  const QuantizedBlockGrid grid = partial_decode(jpeg);
  if (grid.orig_width != mask.width || grid.orig_height != mask.height) {
    throw DomainError(id + ": mask is " + std::to_string(mask.width) + "x" +
                      std::to_string(mask.height) + " but image is " +
                      std::to_string(grid.orig_width) + "x" +
                      std::to_string(grid.orig_height));
  }
  Sample s;
  s.id = std::move(id);
  s.side = side;
  s.input = assemble_plane(grid, side).values;
  s.target = BinaryMask(side, side);
  s.target.pixels = resample_to_side(mask.pixels, mask.width, mask.height, side, 0);
  s.mask = mask;
  return s;
}

Dataset load_dataset(const std::filesystem::path& dir, int side) {
  if (!is_supported_side(side)) {
    throw DomainError("unsupported side " + std::to_string(side));
  }
  const auto entries = read_manifest(dir / "manifest.jsonl");
  if (entries.empty()) throw DomainError("empty dataset: " + dir.string());
  Dataset data;
  data.side = side;
  for (const auto& e : entries) {
    const auto jpeg = read_file(dir / e.jpeg);
    Sample s = make_sample(e.id, jpeg, mask_from_image(read_pgm(dir / e.mask)), side);
    if (e.split == "test") {
      data.val.push_back(std::move(s));
    } else if (e.split == "train") {
      data.train.push_back(std::move(s));
    } else {
      throw DomainError(e.id + ": unknown split '" + e.split + "'");
    }
  }
  if (data.train.empty()) throw DomainError("empty train split: " + dir.string());
  if (data.val.empty()) {
    if (data.train.size() > 1) throw DomainError("empty test split: " + dir.string());
    data.val = data.train;
  }
  return data;
}

}  // namespace comptll
