#include <benchmark/benchmark.h>

#include <random>

#include "saferoad/maskkit.hpp"

using namespace saferoad::maskkit;

namespace {

BinaryMask random_mask(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BinaryMask m({side, side});
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) m.set(x, y, rng() % 3 == 0);
  return m;
}

ScribbleSet scribbles(int side, int strokes) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(0, side);
  ScribbleSet s;
  for (int i = 0; i < strokes; ++i) {
    Stroke st;
    st.radius = 4 + static_cast<double>(rng() % 12);
    st.mode = i % 5 == 4 ? StrokeMode::Erase : StrokeMode::Paint;
    for (int k = 0; k < 20; ++k) st.points.push_back({c(rng), c(rng)});
    s.strokes.push_back(st);
  }
  return s;
}

void BM_Union(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto a = random_mask(side, 1), b = random_mask(side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(mask_union(a, b));
}
BENCHMARK(BM_Union)->Arg(64)->Arg(640);

void BM_Dilate(benchmark::State& state) {
  const auto a = random_mask(640, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dilate(a, static_cast<double>(state.range(0))));
}
BENCHMARK(BM_Dilate)->Arg(3)->Arg(15)->Unit(benchmark::kMillisecond);

void BM_Rasterize(benchmark::State& state) {
  const auto s = scribbles(640, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_scribbles(s, {640, 640}));
}
BENCHMARK(BM_Rasterize)->Arg(1)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_MaskPng(benchmark::State& state) {
  const auto a = random_mask(640, 5);
  for (auto _ : state) benchmark::DoNotOptimize(decode_mask_png(encode_mask_png(a)));
}
BENCHMARK(BM_MaskPng)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
