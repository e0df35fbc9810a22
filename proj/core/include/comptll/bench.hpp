#ifndef COMPTLL_BENCH_HPP_
#define COMPTLL_BENCH_HPP_

// Wall-clock and storage comparisons between the pixel path (full decode)
// and the coefficient path (entropy decode only).

#include <cstdint>
#include <string>
#include <vector>

#include "comptll/jpeg.hpp"
#include "comptll/unet.hpp"

namespace comptll {

struct TimingStats {
  std::vector<double> samples_ms;
  double median_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
  double mad_ms = 0;  // median absolute deviation
};

TimingStats summarize(std::vector<double> samples_ms);

struct DecodeCost {
  int images = 0;
  int repetitions = 0;
  TimingStats full;
  TimingStats partial;
  double reduction_pct = 0;  // (full - partial) / full on the medians
};

// Times decoding the whole corpus `repetitions` times, alternating full and
// partial passes. Throws DomainError for an empty corpus or repetitions < 1.
DecodeCost bench_decode(const std::vector<JpegStream>& streams, int repetitions = 5);

struct PipelineTiming {
  TimingStats decode;
  TimingStats prep;
  TimingStats forward;
  TimingStats total;  // measured around the whole pass, not summed
};

struct PipelineCost {
  int images = 0;
  int repetitions = 0;
  int side = 0;
  PipelineTiming pixel;  // full decode -> normalize -> resample -> forward
  PipelineTiming dct;    // partial decode -> assemble_plane -> forward
  double reduction_pct = 0;
};

// Runs both pipelines over the corpus with the same model. Throws
// DomainError when the model side is unsupported or the corpus is empty.
PipelineCost bench_pipeline(const std::vector<JpegStream>& streams, UNetParams& model,
                            int repetitions = 1);

struct StorageReport {
  int images = 0;
  std::uint64_t raw_bytes = 0;   // decoded 8-bit buffers
  std::uint64_t jpeg_bytes = 0;  // entropy-coded streams
  std::uint64_t qdb_bytes = 0;   // materialized coefficient containers
  double jpeg_reduction_pct = 0;  // 1 - jpeg / raw
  double qdb_reduction_pct = 0;   // 1 - qdb / raw, negative when larger
};

StorageReport bench_storage(const std::vector<JpegStream>& streams);

// JSON documents with a schema version and host metadata.
std::string to_json(const DecodeCost& r);
std::string to_json(const PipelineCost& r);
std::string to_json(const StorageReport& r);

}  // namespace comptll

#endif  // COMPTLL_BENCH_HPP_
