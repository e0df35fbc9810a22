#ifndef COMPTLL_METRICS_HPP_
#define COMPTLL_METRICS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "comptll/image.hpp"

namespace comptll {

// {0,1} pixel mask, row-major.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  bool operator==(const BinaryMask&) const = default;
};

// Nonzero samples become 1.
BinaryMask mask_from_image(const GrayImage& img);
// 1 -> 255, 0 -> 0.
GrayImage mask_to_image(const BinaryMask& mask);

struct ProbMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
};

// Percentages in [0, 100].
struct SegReport {
  double precision = 0, recall = 0, f_measure = 0, dice = 0, iou = 0;
};

// Throws DomainError on a dimension mismatch.
ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gt);

// Ratios with a zero denominator are 100 when both masks are empty (nothing
// to find, nothing predicted) and 0 otherwise.
SegReport report(const ConfusionCounts& c);

struct PostProcessOptions {
  float threshold = 0.5f;
  int min_area = 64;
  int closing_passes = 1;
};

// threshold -> 4-connected components -> drop components smaller than
// min_area -> 3x3 morphological closing. Throws DomainError if the threshold
// is outside (0,1).
BinaryMask post_process(const ProbMap& prob, const PostProcessOptions& options = {});

// Labels 4-connected foreground components; returns the component count and
// writes labels (0 = background, 1..count) into `labels`.
int label_components(const BinaryMask& mask, std::vector<int>& labels);

// 3x3 closing (dilation then erosion). Out-of-image pixels are ignored by the
// erosion, so the result always contains the input.
BinaryMask close3x3(const BinaryMask& mask);

}  // namespace comptll

#endif  // COMPTLL_METRICS_HPP_
