#include <gtest/gtest.h>

#include <string>

#include <json.hpp>

#include "commands.h"
#include "samflow/io.h"
#include "support/generators.h"
#include "support/scenes.h"

namespace samflow::cli {
namespace {

using nlohmann::json;
using testing::Rng;
using testing::TempDir;

void expect_kind(ErrorKind kind, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "no error thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

// 20 px blocks cycling through four translations. The backward flow
// mirrors the block under the target, so only pixels that cross a block edge
// or leave the frame fail the consistency check.
void write_block_scene(const TempDir& dir, int w, int h) {
  const Vec2 d[4] = {{6, 0}, {0, 6}, {-6, 0}, {0, -6}};
  FlowField fwd(w, h), bwd(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec2 b = d[(x / 20 + 2 * (y / 20)) % 4];
      fwd.set(x, y, b);
      bwd.set(x, y, {-b.x, -b.y});
    }
  }
  Rng rng(5);
  write_image_png(dir / "a.png", testing::random_image(rng, w, h, 3));
  write_image_png(dir / "b.png", testing::random_image(rng, w, h, 3));
  write_flo(dir / "fwd.flo", fwd);
  write_flo(dir / "bwd.flo", bwd);
}

void write_zero_scene(const TempDir& dir, int w, int h) {
  Rng rng(6);
  const Image img = testing::smooth_image(rng, w, h, 3);
  write_image_png(dir / "a.png", img);
  write_image_png(dir / "b.png", img);
  write_flo(dir / "fwd.flo", FlowField(w, h));
  write_flo(dir / "bwd.flo", FlowField(w, h));
}

TEST(ParseDims, AcceptsAndRejects) {
  const Dims d = parse_dims("832x256");
  EXPECT_EQ(d.width, 832);
  EXPECT_EQ(d.height, 256);
  for (const char* bad : {"832", "x256", "832x", "0x5", "8a2x3", "-4x4"}) {
    expect_kind(ErrorKind::kInvalidArgument, [&] { parse_dims(bad); });
  }
}

TEST(Segment, EmptyMaskFileGivesOneSegment) {
  TempDir dir;
  RawMaskSet empty;
  empty.width = 20;
  empty.height = 10;
  write_masks(dir / "m.json", empty);
  const json s = json::parse(run_segment({dir / "m.json", Dims{20, 10}, dir / "out"}));
  EXPECT_EQ(s["num_segments"], 1);
  const Segmentation seg = read_segmentation_png(dir / "out/segmentation.png");
  EXPECT_EQ(seg.num_segments, 1);
  for (auto id : seg.ids.values()) EXPECT_EQ(id, 0);
}

TEST(Segment, EmptyMaskFileNeedsDims) {
  TempDir dir;
  RawMaskSet empty;
  write_masks(dir / "m.json", empty);
  expect_kind(ErrorKind::kInvalidArgument,
              [&] { run_segment({dir / "m.json", std::nullopt, dir / "out"}); });
}

TEST(Segment, MatchesLibrary) {
  TempDir dir;
  Rng rng(7);
  const RawMaskSet set = testing::random_mask_set(rng, 24, 16, 6);
  write_masks(dir / "m.json", set);
  run_segment({dir / "m.json", std::nullopt, dir / "out"});
  const Segmentation want = build_full_segmentation(set, 24, 16);
  EXPECT_EQ(read_segmentation_png(dir / "out/segmentation.png").ids, want.ids);
  const json stats = json::parse(read_text_file(dir / "out/segment_stats.json"));
  EXPECT_EQ(stats["num_segments"], want.num_segments);
  EXPECT_EQ(stats["source_mask"].get<std::vector<int>>(), want.source_mask);
}

TEST(Refine, ConsistentZeroFlowsPassThrough) {
  TempDir dir;
  write_zero_scene(dir, 32, 24);
  RefineOptions opt{dir / "a.png", dir / "b.png", dir / "fwd.flo", dir / "bwd.flo",
                    std::nullopt, dir / "out", {}};
  const json s = json::parse(run_refine(opt));
  EXPECT_EQ(s["occluded_pixels"], 0);
  EXPECT_EQ(s["candidates"], 0);
  EXPECT_EQ(s["losses"]["hg"], 0.0);
  EXPECT_EQ(read_flo(dir / "out/refined.flo"), FlowField(32, 24));
  const std::string csv = read_text_file(dir / "out/regions.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
}

TEST(Refine, MixedMotionsFailInlierGate) {
  TempDir dir;
  write_block_scene(dir, 160, 80);
  RefineOptions opt{dir / "a.png", dir / "b.png", dir / "fwd.flo", dir / "bwd.flo",
                    std::nullopt, dir / "out", {}};
  const json s = json::parse(run_refine(opt));
  EXPECT_GT(s["occluded_pixels"].get<int>(), 0);
  ASSERT_EQ(s["regions"].size(), 1u);
  EXPECT_EQ(s["regions"][0]["reject_reason"], "low_inliers");
  EXPECT_EQ(s["accepted"], 0);
  const std::string csv = read_text_file(dir / "out/regions.csv");
  EXPECT_NE(csv.find(",0,low_inliers,"), std::string::npos) << csv;
  EXPECT_EQ(read_flo(dir / "out/refined.flo"), read_flo(dir / "fwd.flo"));
}

TEST(Refine, PlantedHomographyIsRecovered) {
  TempDir dir;
  const testing::PlantedScene p = testing::planted_homography_scene(3, 96, 48);
  write_image_png(dir / "a.png", p.img1);
  write_image_png(dir / "b.png", p.img2);
  write_flo(dir / "fwd.flo", p.fwd);
  write_flo(dir / "bwd.flo", p.bwd);
  RefineOptions opt{dir / "a.png", dir / "b.png", dir / "fwd.flo", dir / "bwd.flo",
                    std::nullopt, dir / "out", {}};
  const json s = json::parse(run_refine(opt));
  EXPECT_EQ(s["accepted"], 1);
  EXPECT_LT(epe(read_flo(dir / "out/refined.flo"), p.truth), 0.1);
}

TEST(Refine, MissingInputIsIoError) {
  TempDir dir;
  write_zero_scene(dir, 8, 8);
  RefineOptions opt{dir / "a.png", dir / "nope.png", dir / "fwd.flo",
                    dir / "bwd.flo", std::nullopt, dir / "out", {}};
  expect_kind(ErrorKind::kIo, [&] { run_refine(opt); });
  EXPECT_FALSE(std::filesystem::exists(dir / "out"));
}

TEST(Refine, FlowSizeMismatch) {
  TempDir dir;
  write_zero_scene(dir, 8, 8);
  write_flo(dir / "bwd.flo", FlowField(9, 8));
  RefineOptions opt{dir / "a.png", dir / "b.png", dir / "fwd.flo", dir / "bwd.flo",
                    std::nullopt, dir / "out", {}};
  expect_kind(ErrorKind::kDimensionMismatch, [&] { run_refine(opt); });
}

TEST(Losses, IdenticalFramesZeroFlow) {
  TempDir dir;
  write_zero_scene(dir, 24, 20);
  LossesOptions opt;
  opt.img1 = dir / "a.png";
  opt.img2 = dir / "b.png";
  opt.flow_fwd = dir / "fwd.flo";
  opt.flow_bwd = dir / "bwd.flo";
  opt.out_dir = dir / "out";
  const json s = json::parse(run_losses(opt));
  EXPECT_NEAR(s["losses"]["total"].get<double>(), 0.0, 1e-12);
  EXPECT_EQ(s["smooth"], 0.0);
  const std::string csv = read_text_file(dir / "out/losses.csv");
  EXPECT_EQ(csv.rfind("name,value\nph,", 0), 0u) << csv;
}

TEST(Losses, AugTermNeedsBothFlows) {
  TempDir dir;
  write_zero_scene(dir, 8, 8);
  LossesOptions opt;
  opt.img1 = dir / "a.png";
  opt.img2 = dir / "b.png";
  opt.flow_fwd = dir / "fwd.flo";
  opt.flow_bwd = dir / "bwd.flo";
  opt.aug_pred = dir / "fwd.flo";
  opt.out_dir = dir / "out";
  expect_kind(ErrorKind::kInvalidArgument, [&] { run_losses(opt); });
  opt.aug_target = dir / "fwd.flo";
  const json s = json::parse(run_losses(opt));
  EXPECT_EQ(s["losses"]["aug"], 0.0);
}

TEST(KeyObjects, CacheMatchesSelection) {
  TempDir dir;
  Rng rng(8);
  const RawMaskSet set = testing::random_key_object_masks(rng);
  const Image img = testing::random_image(rng, set.width, set.height, 3);
  write_masks(dir / "m.json", set);
  write_image_png(dir / "img.png", img);
  KeyObjectsOptions opt;
  opt.image = dir / "img.png";
  opt.masks = dir / "m.json";
  opt.out_dir = dir / "cache";
  const json s = json::parse(run_keyobjects(opt));
  const auto want = select_key_objects(set, read_image_png(dir / "img.png"), {});
  EXPECT_EQ(s["key_objects"], want.size());
  const auto got = read_key_object_cache(dir / "cache" / s["cache_dir"].get<std::string>());
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_EQ(got[k].source_index, want[k].source_index);
    EXPECT_EQ(got[k].mask, want[k].mask);
  }
}

TEST(Augment, RepeatableWithSeed) {
  TempDir dir;
  Rng rng(9);
  const int w = 64, h = 48;
  write_image_png(dir / "a.png", testing::random_image(rng, w, h, 3));
  write_image_png(dir / "b.png", testing::random_image(rng, w, h, 3));
  write_flo(dir / "f.flo", testing::random_float_flow(rng, w, h, 3.0));
  AugmentOptions opt;
  opt.img1 = dir / "a.png";
  opt.img2 = dir / "b.png";
  opt.flow = dir / "f.flo";
  opt.pred = dir / "f.flo";
  opt.cfg.seed = 42;
  opt.out_dir = dir / "r1";
  const std::string s1 = run_augment(opt);
  opt.out_dir = dir / "r2";
  const std::string s2 = run_augment(opt);
  EXPECT_EQ(s1, s2);
  for (const char* f : {"img1.png", "img2.png", "flow_target.flo", "valid.png",
                        "occluded.png", "transforms.json"}) {
    EXPECT_EQ(read_binary_file(dir / "r1" / f), read_binary_file(dir / "r2" / f)) << f;
  }
  opt.cfg.seed = 43;
  opt.out_dir = dir / "r3";
  run_augment(opt);
  EXPECT_NE(read_binary_file(dir / "r1/transforms.json"),
            read_binary_file(dir / "r3/transforms.json"));
}

TEST(Augment, MissingCacheDirectory) {
  TempDir dir;
  write_zero_scene(dir, 8, 8);
  AugmentOptions opt;
  opt.img1 = dir / "a.png";
  opt.img2 = dir / "b.png";
  opt.flow = dir / "fwd.flo";
  opt.objects = dir / "no_cache";
  opt.out_dir = dir / "out";
  expect_kind(ErrorKind::kIo, [&] { run_augment(opt); });
}

TEST(Landscape, SyntheticSceneFindsOffset) {
  TempDir dir;
  LandscapeOptions opt;
  opt.synthetic = true;
  opt.landscape.step = 1.0;
  opt.out_dir = dir / "out";
  const json s = json::parse(run_landscape(opt));
  EXPECT_EQ(s["points"], 41);
  EXPECT_LE(std::abs(s["argmin_shift"].get<double>() - 10.0), 1.0);
  const std::string csv = read_text_file(dir / "out/curve.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 42);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/grad_homography.png"));
}

TEST(Landscape, NeedsFlowOrSynthetic) {
  TempDir dir;
  LandscapeOptions opt;
  opt.out_dir = dir / "out";
  expect_kind(ErrorKind::kInvalidArgument, [&] { run_landscape(opt); });
}

TEST(MakeStepScene, Layout) {
  const StepScene s = make_step_scene(16, 2, 3, 2.0);
  for (int x = 0; x < 16; ++x) {
    EXPECT_EQ(s.seg.ids(x, 1), x >= 8 ? 1 : 0);
    EXPECT_EQ(s.flow.u(x, 1), x >= 5 ? 2.0 : 0.0);
    EXPECT_EQ(s.aligned.u(x, 1), x >= 8 ? 2.0 : 0.0);
  }
}

TEST(Metrics, IdenticalFlowsReportZero) {
  TempDir dir;
  Rng rng(10);
  write_flo(dir / "gt.flo", testing::random_float_flow(rng, 20, 12, 8.0));
  MetricsOptions opt;
  opt.est = dir / "gt.flo";
  opt.gt = dir / "gt.flo";
  opt.out_dir = dir / "out";
  const json s = json::parse(run_metrics(opt));
  EXPECT_EQ(s["epe_all"], 0.0);
  EXPECT_EQ(s["fl_all"], 0.0);
  EXPECT_EQ(s["n_all"], 240);
  const json r = json::parse(read_text_file(dir / "out/metrics.json"));
  EXPECT_EQ(r["epe_all"], 0.0);
}

TEST(Metrics, CsvReportAndMaskConflicts) {
  TempDir dir;
  const FlowField gt(6, 4);
  FlowField est(6, 4);
  for (double& v : est.u.values()) v = 3.0;
  for (double& v : est.v.values()) v = 4.0;
  write_flo(dir / "gt.flo", gt);
  write_flo(dir / "est.flo", est);
  BoolMap occ(6, 4, 0);
  occ(0, 0) = 1;
  write_mask_png(dir / "occ.png", occ);
  MetricsOptions opt;
  opt.est = dir / "est.flo";
  opt.gt = dir / "gt.flo";
  opt.occ = dir / "occ.png";
  opt.out_dir = dir / "out";
  opt.report_name = "m.csv";
  run_metrics(opt);
  const std::string csv = read_text_file(dir / "out/m.csv");
  EXPECT_EQ(csv.rfind("name,value\nepe_all,5\nepe_noc,5\nepe_occ,5\n", 0), 0u) << csv;
  opt.noc = dir / "occ.png";
  expect_kind(ErrorKind::kInvalidArgument, [&] { run_metrics(opt); });
}

}  // namespace
}  // namespace samflow::cli
