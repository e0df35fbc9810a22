#include "comptll/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "comptll/coeff_plane.hpp"
#include "comptll/error.hpp"
#include "json.hpp"

namespace comptll {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

volatile std::size_t g_sink = 0;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double reduction(double before, double after) {
  return before > 0 ? 100.0 * (before - after) / before : 0.0;
}

void require_corpus(const std::vector<JpegStream>& streams, int repetitions) {
  if (streams.empty()) throw DomainError("benchmark corpus is empty");
  if (repetitions < 1) throw DomainError("repetitions must be >= 1");
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) return line.substr(colon + 2);
    }
  }
  return "unknown";
}

json host() {
  return {{"cpu", cpu_model()},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"threads_used", 1},
          {"compiler", __VERSION__},
#ifdef NDEBUG
          {"assertions", false},
#else
          {"assertions", true},
#endif
  };
}

json stats_json(const TimingStats& s) {
  return {{"median_ms", s.median_ms}, {"min_ms", s.min_ms}, {"max_ms", s.max_ms},
          {"mad_ms", s.mad_ms},       {"samples_ms", s.samples_ms}};
}

json pipeline_json(const PipelineTiming& p) {
  return {{"decode", stats_json(p.decode)},
          {"prep", stats_json(p.prep)},
          {"forward", stats_json(p.forward)},
          {"total", stats_json(p.total)}};
}

std::vector<float> forward_one(UNetParams& model, std::vector<float> plane) {
  CoeffPlane p;
  p.side = model.config.input_side;
  p.values = std::move(plane);
  return predict_plane(model, p);
}

}  // namespace

TimingStats summarize(std::vector<double> samples_ms) {
  TimingStats s;
  if (samples_ms.empty()) return s;
  s.median_ms = median_of(samples_ms);
  s.min_ms = *std::min_element(samples_ms.begin(), samples_ms.end());
  s.max_ms = *std::max_element(samples_ms.begin(), samples_ms.end());
  std::vector<double> dev;
  for (double x : samples_ms) dev.push_back(std::abs(x - s.median_ms));
  s.mad_ms = median_of(dev);
  s.samples_ms = std::move(samples_ms);
  return s;
}

DecodeCost bench_decode(const std::vector<JpegStream>& streams, int repetitions) {
  require_corpus(streams, repetitions);
  // Warm-up pass so first-touch page faults land outside the samples.
  std::size_t sink = 0;
  for (const auto& s : streams) sink += full_decode(s).samples.size() + partial_decode(s).blocks.size();

  std::vector<double> full, partial;
  for (int r = 0; r < repetitions; ++r) {
    auto t0 = Clock::now();
    for (const auto& s : streams) sink += full_decode(s).samples[0];
    full.push_back(ms_since(t0));
    t0 = Clock::now();
    for (const auto& s : streams) sink += static_cast<std::size_t>(partial_decode(s).blocks[0].coeffs[0]);
    partial.push_back(ms_since(t0));
  }
  DecodeCost r;
  r.images = static_cast<int>(streams.size());
  r.repetitions = repetitions;
  r.full = summarize(std::move(full));
  r.partial = summarize(std::move(partial));
  r.reduction_pct = reduction(r.full.median_ms, r.partial.median_ms);
  g_sink = sink;
  return r;
}

PipelineCost bench_pipeline(const std::vector<JpegStream>& streams, UNetParams& model,
                            int repetitions) {
  require_corpus(streams, repetitions);
  const int side = model.config.input_side;
  if (!is_supported_side(side)) {
    throw DomainError("model side " + std::to_string(side) + " is not a supported plane side");
  }
  const std::size_t n = streams.size();
  std::vector<double> pd, pp, pf, pt, dd, dp, df, dt;
  for (int rep = 0; rep < repetitions; ++rep) {
    // Pixel path.
    {
      const auto t_all = Clock::now();
      auto t0 = Clock::now();
      std::vector<GrayImage> images;
      images.reserve(n);
      for (const auto& s : streams) images.push_back(full_decode(s));
      pd.push_back(ms_since(t0));
      t0 = Clock::now();
      std::vector<std::vector<float>> planes;
      for (const auto& img : images) {
        const auto raster = resample_to_side(img.samples, img.width, img.height, side, 255);
        std::vector<float> plane(raster.size());
        for (std::size_t i = 0; i < raster.size(); ++i) plane[i] = raster[i] / 255.0f;
        planes.push_back(std::move(plane));
      }
      pp.push_back(ms_since(t0));
      t0 = Clock::now();
      for (auto& p : planes) forward_one(model, std::move(p));
      pf.push_back(ms_since(t0));
      pt.push_back(ms_since(t_all));
    }
    // Coefficient path.
    {
      const auto t_all = Clock::now();
      auto t0 = Clock::now();
      std::vector<QuantizedBlockGrid> grids;
      grids.reserve(n);
      for (const auto& s : streams) grids.push_back(partial_decode(s));
      dd.push_back(ms_since(t0));
      t0 = Clock::now();
      std::vector<std::vector<float>> planes;
      for (const auto& g : grids) planes.push_back(assemble_plane(g, side).values);
      dp.push_back(ms_since(t0));
      t0 = Clock::now();
      for (auto& p : planes) forward_one(model, std::move(p));
      df.push_back(ms_since(t0));
      dt.push_back(ms_since(t_all));
    }
  }
  PipelineCost r;
  r.images = static_cast<int>(n);
  r.repetitions = repetitions;
  r.side = side;
  r.pixel = {summarize(pd), summarize(pp), summarize(pf), summarize(pt)};
  r.dct = {summarize(dd), summarize(dp), summarize(df), summarize(dt)};
  r.reduction_pct = reduction(r.pixel.total.median_ms, r.dct.total.median_ms);
  return r;
}

StorageReport bench_storage(const std::vector<JpegStream>& streams) {
  StorageReport r;
  for (const auto& s : streams) {
    const QuantizedBlockGrid g = partial_decode(s);
    r.raw_bytes += static_cast<std::uint64_t>(g.orig_width) * g.orig_height;
    r.jpeg_bytes += s.size();
    r.qdb_bytes += serialize_qdb(g).size();
    ++r.images;
  }
  if (r.raw_bytes > 0) {
    r.jpeg_reduction_pct = 100.0 * (1.0 - static_cast<double>(r.jpeg_bytes) / r.raw_bytes);
    r.qdb_reduction_pct = 100.0 * (1.0 - static_cast<double>(r.qdb_bytes) / r.raw_bytes);
  }
  return r;
}

std::string to_json(const DecodeCost& r) {
  const json j = {{"schema", "comptll.decode_cost/1"},
                  {"host", host()},
                  {"images", r.images},
                  {"repetitions", r.repetitions},
                  {"full_decode", stats_json(r.full)},
                  {"partial_decode", stats_json(r.partial)},
                  {"reduction_pct", r.reduction_pct}};
  return j.dump(2);
}

std::string to_json(const PipelineCost& r) {
  const json j = {{"schema", "comptll.pipeline_cost/1"},
                  {"host", host()},
                  {"images", r.images},
                  {"repetitions", r.repetitions},
                  {"side", r.side},
                  {"pixel", pipeline_json(r.pixel)},
                  {"dct", pipeline_json(r.dct)},
                  {"reduction_pct", r.reduction_pct}};
  return j.dump(2);
}

std::string to_json(const StorageReport& r) {
  const json j = {{"schema", "comptll.storage/1"},
                  {"images", r.images},
                  {"raw_bytes", r.raw_bytes},
                  {"jpeg_bytes", r.jpeg_bytes},
                  {"qdb_bytes", r.qdb_bytes},
                  {"jpeg_reduction_pct", r.jpeg_reduction_pct},
                  {"qdb_reduction_pct", r.qdb_reduction_pct}};
  return j.dump(2);
}

}  // namespace comptll
