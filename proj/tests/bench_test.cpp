#include "comptll/bench.hpp"
#include "comptll/docgen.hpp"
#include "comptll/error.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace comptll;

namespace {

std::vector<JpegStream> corpus(int n, int side) {
  DocSpec s;
  s.side = side;
  std::vector<JpegStream> out;
  for (const auto& d : generate(s, n)) out.push_back(encode(d.image, 75));
  return out;
}

}  // namespace

TEST_SUITE("bench") {
  TEST_CASE("summary statistics") {
    const TimingStats t = summarize({5, 1, 3, 2, 100});
    CHECK(t.median_ms == 3);
    CHECK(t.min_ms == 1);
    CHECK(t.max_ms == 100);
    CHECK(t.mad_ms == 2);  // deviations 2,2,0,1,97
    CHECK(summarize({4, 2}).median_ms == 3);
    CHECK(summarize({}).median_ms == 0);
  }

  TEST_CASE("partial decoding is cheaper than full decoding") {
    const auto streams = corpus(6, 512);
    const DecodeCost c = bench_decode(streams, 5);
    CHECK(c.images == 6);
    CHECK(c.full.samples_ms.size() == 5);
    CHECK(c.partial.median_ms < c.full.median_ms);
    CHECK(c.reduction_pct > 0);
    CHECK(c.reduction_pct ==
          doctest::Approx(100.0 * (c.full.median_ms - c.partial.median_ms) / c.full.median_ms));
    const auto j = nlohmann::json::parse(to_json(c));
    CHECK(j.contains("schema"));
    CHECK(j.contains("host"));
    CHECK(j["host"]["threads_used"] == 1);
    CHECK_THROWS_AS(bench_decode({}, 1), DomainError);
    CHECK_THROWS_AS(bench_decode(streams, 0), DomainError);
  }

  TEST_CASE("storage accounting") {
    const auto streams = corpus(3, 256);
    const StorageReport r = bench_storage(streams);
    CHECK(r.raw_bytes == 3u * 256 * 256);
    std::uint64_t jpeg = 0;
    for (const auto& s : streams) jpeg += s.size();
    CHECK(r.jpeg_bytes == jpeg);
    // 2 bytes per coefficient plus the header, against 1 byte per pixel.
    CHECK(r.qdb_bytes == 3u * (kQdbHeaderBytes + 2u * 256 * 256));
    CHECK(r.jpeg_reduction_pct > 50);
    CHECK(r.qdb_reduction_pct < 0);
    CHECK(r.jpeg_reduction_pct == doctest::Approx(100.0 * (1.0 - double(jpeg) / r.raw_bytes)));
    const auto j = nlohmann::json::parse(to_json(r));
    CHECK(j.contains("schema"));
  }

  TEST_CASE("pipeline stage times account for the measured total") {
    const auto streams = corpus(3, 256);
    UNetConfig cfg;
    cfg.input_side = 256;
    cfg.width_mult = 0.0625;
    UNetParams model = build(cfg, 1);
    const PipelineCost c = bench_pipeline(streams, model, 2);
    CHECK(c.side == 256);
    for (const PipelineTiming* t : {&c.pixel, &c.dct}) {
      const double parts = t->decode.median_ms + t->prep.median_ms + t->forward.median_ms;
      INFO("stages " << parts << " total " << t->total.median_ms);
      CHECK(std::abs(parts - t->total.median_ms) <= 0.05 * t->total.median_ms + 0.5);
    }
    CHECK(nlohmann::json::parse(to_json(c)).contains("schema"));
    CHECK_THROWS_AS(bench_pipeline({}, model, 1), DomainError);
  }
}
