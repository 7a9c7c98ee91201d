#include <benchmark/benchmark.h>

#include <random>

#include "lanesurvey/lane_vision.hpp"
#include "lanesurvey/map_match.hpp"
#include "lanesurvey/osm_network.hpp"
#include "lanesurvey/route_infer.hpp"
#include "test_support.hpp"

using namespace lanesurvey;

namespace {

void BM_LoadNetwork(benchmark::State& state) {
  const std::string xml = testing::random_grid_extract(7, static_cast<int>(state.range(0)), 100000);
  for (auto _ : state) benchmark::DoNotOptimize(load_network(xml));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * xml.size()));
}
BENCHMARK(BM_LoadNetwork)->Arg(10)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_NearestWay(benchmark::State& state) {
  const int lattice = static_cast<int>(state.range(0));
  const RoadNetwork net = load_network(testing::random_grid_extract(8, lattice, 100000));
  const SpatialIndex index(net);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(0.0, 0.001 * lattice);
  for (auto _ : state) benchmark::DoNotOptimize(index.nearest_way({-38.0 + d(rng), 145.0 + d(rng)}));
}
BENCHMARK(BM_NearestWay)->Arg(10)->Arg(30)->Arg(60);

void BM_NearestWayBruteForce(benchmark::State& state) {
  const int lattice = static_cast<int>(state.range(0));
  const RoadNetwork net = load_network(testing::random_grid_extract(8, lattice, 100000));
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(0.0, 0.001 * lattice);
  for (auto _ : state) benchmark::DoNotOptimize(testing::oracle::nearest_way(net, {-38.0 + d(rng), 145.0 + d(rng)}));
}
BENCHMARK(BM_NearestWayBruteForce)->Arg(10)->Arg(30);

void BM_InferSpans(benchmark::State& state) {
  std::mt19937 rng(2);
  std::vector<bool> flags(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = rng() % 3 != 0;
  for (auto _ : state) benchmark::DoNotOptimize(infer_spans(flags, 1));
}
BENCHMARK(BM_InferSpans)->Arg(64)->Arg(4096);

void BM_Canny(benchmark::State& state) {
  const GrayImage img = testing::render_scene({});
  for (auto _ : state) benchmark::DoNotOptimize(canny(img));
}
BENCHMARK(BM_Canny)->Unit(benchmark::kMillisecond);

void BM_AnalyzeFrame(benchmark::State& state) {
  const GrayImage img = testing::render_scene({});
  for (auto _ : state) benchmark::DoNotOptimize(analyze_frame(img, "f"));
}
BENCHMARK(BM_AnalyzeFrame)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
