#include <benchmark/benchmark.h>

#include <vector>

#include "samflow/geometry.h"
#include "samflow/losses.h"
#include "samflow/maskfeat.h"
#include "samflow/masks.h"
#include "support/generators.h"
#include "support/scenes.h"

namespace {

using namespace samflow;
using testing::Rng;

void BM_Ransac(benchmark::State& state) {
  Rng rng(1);
  const Homography h = testing::random_homography(rng);
  const int n = static_cast<int>(state.range(0));
  std::vector<Vec2> src, dst;
  for (int i = 0; i < n; ++i) {
    const Vec2 p{rng.uniform(0, 128), rng.uniform(0, 64)};
    src.push_back(p);
    // 30 % outliers.
    dst.push_back(rng.coin(0.3) ? Vec2{rng.uniform(0, 128), rng.uniform(0, 64)}
                                : h.project(p));
  }
  RansacConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ransac_homography(src, dst, cfg));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Ransac)->Arg(100)->Arg(1000)->Arg(8000);

void BM_RefineRegions(benchmark::State& state) {
  const testing::PlantedScene s = testing::planted_homography_scene(7);
  const OcclusionMap occ = occlusion_fb(s.fwd, s.bwd);
  const Segmentation seg = Segmentation::uniform(s.fwd.width(), s.fwd.height());
  for (auto _ : state) {
    benchmark::DoNotOptimize(refine_regions(s.fwd, seg, occ, {}));
  }
}
BENCHMARK(BM_RefineRegions)->Unit(benchmark::kMillisecond);

void BM_CensusLoss(benchmark::State& state) {
  Rng rng(2);
  const int w = static_cast<int>(state.range(0)), h = w / 2;
  const Image a = testing::random_image(rng, w, h, 3);
  const Image b = testing::random_image(rng, w, h, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(census_loss(a, b));
  }
  state.SetItemsProcessed(state.iterations() * w * h);
}
BENCHMARK(BM_CensusLoss)->Arg(128)->Arg(512);

void BM_SmoothnessGradient(benchmark::State& state) {
  Rng rng(3);
  const FlowField f = testing::random_flow(rng, 256, 128, 4.0);
  const EdgeWeights w = edge_weights(testing::random_segmentation(rng, 256, 128, 12));
  for (auto _ : state) {
    benchmark::DoNotOptimize(grad_smoothness_2nd(f, w, Norm::kL1));
  }
}
BENCHMARK(BM_SmoothnessGradient);

void BM_BuildSegmentation(benchmark::State& state) {
  Rng rng(4);
  const RawMaskSet set = testing::random_key_object_masks(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_full_segmentation(set, set.width, set.height));
  }
}
BENCHMARK(BM_BuildSegmentation);

void BM_CorrelationVolume(benchmark::State& state) {
  Rng rng(5);
  const int c = static_cast<int>(state.range(0));
  FeatureMap f1(64, 32, c), f2(64, 32, c);
  for (float& v : f1.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (float& v : f2.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(correlation_volume(f1, f2));
  }
}
BENCHMARK(BM_CorrelationVolume)->Arg(32)->Arg(128);

void BM_SegmentMaxPool(benchmark::State& state) {
  Rng rng(6);
  const Segmentation seg = testing::random_segmentation(rng, 128, 64, 20);
  FeatureMap f(128, 64, 64);
  for (float& v : f.data()) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(segment_max_pool(f, seg));
  }
}
BENCHMARK(BM_SegmentMaxPool);

}  // namespace

BENCHMARK_MAIN();
