#include <random>

#include <benchmark/benchmark.h>

#include "comptll/coeff_plane.hpp"
#include "comptll/dct.hpp"
#include "comptll/docgen.hpp"
#include "comptll/jpeg.hpp"
#include "comptll/ops.hpp"

using namespace comptll;

namespace {

JpegStream page(int side) {
  DocSpec spec;
  spec.side = side;
  return encode(generate_one(spec, 0).image, 50);
}

void BM_Fdct(benchmark::State& state) {
  std::mt19937_64 rng(1);
  PixelBlock b;
  for (auto& s : b.samples) s = static_cast<std::uint8_t>(rng());
  for (auto _ : state) benchmark::DoNotOptimize(fdct(b, LevelShift::kOn));
}
BENCHMARK(BM_Fdct);

void BM_FullDecode(benchmark::State& state) {
  const JpegStream s = page(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(full_decode(s));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_FullDecode)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_PartialDecode(benchmark::State& state) {
  const JpegStream s = page(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(partial_decode(s));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * s.size()));
}
BENCHMARK(BM_PartialDecode)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_AssemblePlane(benchmark::State& state) {
  const QuantizedBlockGrid g = partial_decode(page(512));
  for (auto _ : state) benchmark::DoNotOptimize(assemble_plane(g, 512));
}
BENCHMARK(BM_AssemblePlane)->Unit(benchmark::kMillisecond);

// 3x3 same-padded convolution; arg = channels, spatial 128x128.
void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> xv(static_cast<std::size_t>(c) * 128 * 128), wv(static_cast<std::size_t>(c) * c * 9);
  for (auto& v : xv) v = u(rng);
  for (auto& v : wv) v = u(rng);
  const ad::Tensor x = ad::Tensor::from({1, c, 128, 128}, xv);
  const ad::Tensor w = ad::Tensor::from({c, c, 3, 3}, wv);
  const ad::Tensor b = ad::Tensor::zeros({c});
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv2d(x, w, b, 1, 1));
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * c * c * 9 * 128 * 128 * static_cast<double>(state.iterations()) / 1e9,
      benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv2d)->Arg(4)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
