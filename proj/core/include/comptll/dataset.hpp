#ifndef COMPTLL_DATASET_HPP_
#define COMPTLL_DATASET_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "comptll/jpeg.hpp"
#include "comptll/metrics.hpp"

namespace comptll {

// One training example: the coefficient plane of a JPEG page and its mask
// resampled onto the same side x side grid. `mask` keeps the full-resolution
// ground truth for evaluation.
struct Sample {
  std::string id;
  int side = 0;
  std::vector<float> input;
  BinaryMask target;
  BinaryMask mask;
};

struct Dataset {
  int side = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
};

// Throws DomainError when the mask and stream dimensions disagree.
Sample make_sample(std::string id, std::span<const std::uint8_t> jpeg,
                   const BinaryMask& mask, int side);

// Loads an export_dataset() directory. Rows tagged "test" form the
// validation split; a single-document corpus validates on its training page.
Dataset load_dataset(const std::filesystem::path& dir, int side);

}  // namespace comptll

#endif  // COMPTLL_DATASET_HPP_
