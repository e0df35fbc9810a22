#ifndef COMPTLL_DOCGEN_HPP_
#define COMPTLL_DOCGEN_HPP_

// Seeded synthetic handwritten-page generator with baseline-strip ground
// truth. Pages carry skewed, unevenly spaced, optionally touching pseudo-text
// lines in one or more columns, plus unlabeled distractors (marginalia,
// vertical stripes) over a speckled background.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "comptll/image.hpp"
#include "comptll/metrics.hpp"

namespace comptll {

struct DocSpec {
  std::uint64_t seed = 42;
  int side = 512;
  int min_columns = 1;
  int max_columns = 2;
  int min_lines = 6;  // per column
  int max_lines = 12;
  double min_skew_deg = -3.0;
  double max_skew_deg = 3.0;
  double touch_probability = 0.1;
  double noise_level = 6.0;  // speckle standard deviation, gray levels
  double marginalia_probability = 0.3;
  double stripe_probability = 0.2;

  // Throws DomainError for empty ranges, probabilities outside [0,1], or a
  // geometry that cannot fit max_columns columns.
  void validate() const;
};

struct LabeledDoc {
  std::string id;
  GrayImage image;
  BinaryMask mask;
  DocSpec spec;
  int line_count = 0;
};

// Page `index` depends only on (spec, index).
LabeledDoc generate_one(const DocSpec& spec, int index);
std::vector<LabeledDoc> generate(const DocSpec& spec, int count);

// Strip thickness for a given line pitch: 6% of the pitch, at least 5 px.
int strip_thickness(int pitch);

struct ManifestEntry {
  std::string id;
  std::string image;  // raw PGM, relative to the dataset directory
  std::string jpeg;
  std::string mask;
  std::string split;  // "train" or "test"
  int width = 0;
  int height = 0;
};

// Number of held-out documents for a corpus of n: 10%, at least one once
// there are two documents, none for a single document.
std::size_t validation_count(std::size_t n);

// Writes <id>.pgm, <id>.jpg (at `quality`), <id>.mask.pgm per document and a
// manifest.jsonl. The last validation_count(n) documents are tagged "test".
std::vector<ManifestEntry> export_dataset(const std::vector<LabeledDoc>& docs,
                                          const std::filesystem::path& dir,
                                          int quality);

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

}  // namespace comptll

#endif  // COMPTLL_DOCGEN_HPP_
