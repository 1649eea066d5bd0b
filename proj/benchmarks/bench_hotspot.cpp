#include <benchmark/benchmark.h>

#include <random>

#include "saferoad/hotspot.hpp"

using namespace saferoad;

namespace {

std::vector<LatLon> city(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(40.55, 40.90), lon(-74.05, -73.70);
  std::normal_distribution<double> jitter(0.0, 2e-4);
  std::vector<LatLon> pts;
  pts.reserve(n);
  // Half uniform background, half around 200 intersections.
  std::vector<LatLon> centers(200);
  for (auto& c : centers) c = {lat(rng), lon(rng)};
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 2) {
      pts.push_back({lat(rng), lon(rng)});
    } else {
      const auto& c = centers[rng() % centers.size()];
      pts.push_back({c.lat + jitter(rng), c.lon + jitter(rng)});
    }
  }
  return pts;
}

void BM_Dbscan(benchmark::State& state) {
  const auto pts = city(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(hotspot::dbscan(pts, {100.0, 5}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Dbscan)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Haversine(benchmark::State& state) {
  const auto pts = city(1024, 2);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(haversine_meters(pts[i & 1023], pts[(i + 1) & 1023]));
    ++i;
  }
}
BENCHMARK(BM_Haversine);

}  // namespace

BENCHMARK_MAIN();
