// Acceptance gate. Runs every criterion, prints one line each and exits
// nonzero when any of them fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "commands.h"
#include "samflow/analysis.h"
#include "samflow/io.h"
#include "samflow/maskfeat.h"
#include "support/generators.h"
#include "support/oracles.h"
#include "support/scenes.h"

namespace {

using namespace samflow;
using testing::Rng;
using testing::TempDir;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<BoolMap> bits_of(const RawMaskSet& set) {
  std::vector<BoolMap> out;
  for (const BinaryMask& m : set.masks) out.push_back(m.bits);
  return out;
}

// --- C1 ----------------------------------------------------------------------

Outcome planted_refinement() {
  TempDir dir("samflow_acc1");
  int good = 0;
  double worst = 0.0, elapsed = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const testing::PlantedScene s = testing::planted_homography_scene(1000 + seed);
    write_image_png(dir / "a.png", s.img1);
    write_image_png(dir / "b.png", s.img2);
    write_flo(dir / "fwd.flo", s.fwd);
    write_flo(dir / "bwd.flo", s.bwd);
    cli::RefineOptions opt{dir / "a.png", dir / "b.png", dir / "fwd.flo",
                           dir / "bwd.flo", std::nullopt, dir / "out", {}};
    const auto t0 = std::chrono::steady_clock::now();
    cli::run_refine(opt);
    elapsed += seconds_since(t0);
    const double e = epe(read_flo(dir / "out/refined.flo"), s.truth);
    worst = std::max(worst, e);
    good += e < 0.1;
  }
  return {good >= 95 && elapsed < 5.0,
          fmt("%d/100 scenes with EPE < 0.1 px (worst %.3g), refine time %.2f s",
              good, worst, elapsed)};
}

// --- C2 ----------------------------------------------------------------------

Outcome gate_conformance() {
  const int reliable[] = {1000, 1900, 2100};       // of 10000 region pixels
  const double inlier_ratio[] = {0.4, 0.49, 0.51};
  int cases = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (int r : reliable) {
      for (double ir : inlier_ratio) {
        const int inliers = static_cast<int>(std::lround(r * ir));
        const testing::GateScene s = testing::gate_scene(50 + seed, r, inliers);
        const RefineResult res = refine_regions(s.flow, s.seg, s.occ, {});
        const bool want = r >= 2000 && ir >= 0.5;
        const RejectReason want_reason = r < 2000   ? RejectReason::kTooFewReliable
                                         : ir < 0.5 ? RejectReason::kLowInliers
                                                    : RejectReason::kNone;
        ++cases;
        if (res.regions.size() != 1 || res.regions[0].accepted != want ||
            res.regions[0].reject_reason != want_reason) {
          ++mismatches;
        }
      }
    }
  }
  return {mismatches == 0, fmt("%d mismatches over %d regions", mismatches, cases)};
}

// --- C3 ----------------------------------------------------------------------

Outcome landscape_shape() {
  const cli::StepScene sc = cli::make_step_scene(128, 64, 10.0);
  LandscapeConfig cfg;
  cfg.step = 1.0;
  cfg.norm = Norm::kL1;
  const LandscapeCurve c = landscape_sweep(sc.flow, sc.seg, cfg);
  std::size_t i0 = 0, imin = 0;
  for (std::size_t i = 0; i < c.shifts.size(); ++i) {
    if (c.shifts[i] == 0.0) i0 = i;
    if (c.shifts[i] == c.argmin_shift) imin = i;
  }
  double max_step = 0.0;
  for (std::size_t i = i0 - 2; i < i0 + 2; ++i) {
    max_step = std::max(max_step, std::abs(c.losses[i + 1] - c.losses[i]));
  }
  const double drop = c.losses[i0] - c.losses[imin];
  const bool shape = drop > 10.0 * max_step;
  const bool argmin = std::abs(c.argmin_shift - 10.0) <= cfg.step;

  // Occluded bands in both segments so that both get refined.
  OcclusionMap occ{BoolMap(128, 64, 0)};
  for (int y = 0; y < 64; ++y) {
    for (int x : {20, 21, 22, 23, 90, 91, 92, 93}) occ.occluded(x, y) = 1;
  }
  const RefineResult r = refine_regions(sc.aligned, sc.seg, occ, {});
  int accepted = 0;
  for (const RegionRefinement& reg : r.regions) accepted += reg.accepted;
  const double hg = homography_smoothness(sc.aligned, r.refined, r.region_mask);
  const bool hg_zero = accepted == 2 && hg <= 1e-9;

  return {shape && argmin && hg_zero,
          fmt("drop %.4g vs max step %.3g near start, argmin %+g (planted +10), "
              "hg at aligned flow %.2g over %d refined regions",
              drop, max_step, c.argmin_shift, hg, accepted)};
}

// --- C4 ----------------------------------------------------------------------

Outcome gradient_locality() {
  double worst_trad = 0.0, worst_homo = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const testing::GradientScene s = testing::gradient_scene(300 + seed);
    const double area = static_cast<double>(
        std::accumulate(s.region.values().begin(), s.region.values().end(), 0));
    const GradientMap trad =
        gradient_field_map(s.flow, s.seg, s.occ, GradientLoss::kTraditional);
    const GradientMap homo =
        gradient_field_map(s.flow, s.seg, s.occ, GradientLoss::kHomography);
    worst_trad = std::max(worst_trad, gradient_support(trad.magnitude, s.region) / area);
    worst_homo = std::min(worst_homo, gradient_support(homo.magnitude, s.region) / area);
  }
  return {worst_trad <= 0.2 && worst_homo >= 0.9,
          fmt("20 scenes: traditional support <= %.1f%%, homography support >= %.1f%% "
              "of region",
              100 * worst_trad, 100 * worst_homo)};
}

// --- C5 ----------------------------------------------------------------------

bool close_rel(double a, double n) {
  return std::abs(a - n) <= 1e-3 * std::max(std::abs(a), std::abs(n)) + 1e-10;
}

Outcome finite_differences() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(500);
  long checked = 0, failed = 0;
  auto compare = [&](const FlowField& a, const FlowField& n,
                     const std::function<bool(int comp, std::size_t i)>& use) {
    for (std::size_t i = 0; i < a.u.size(); ++i) {
      if (use(0, i)) {
        ++checked;
        failed += !close_rel(a.u[i], n.u[i]);
      }
      if (use(1, i)) {
        ++checked;
        failed += !close_rel(a.v[i], n.v[i]);
      }
    }
  };
  for (int t = 0; t < 20; ++t) {
    const int w = 32, h = 16;
    const FlowField f = testing::random_flow(rng, w, h, 3.0);
    const EdgeWeights ew =
        t % 2 == 0 ? edge_weights(testing::random_image(rng, w, h, 3), 10.0)
                   : edge_weights(testing::random_segmentation(rng, w, h, 4));
    const auto all = [](int, std::size_t) { return true; };

    for (Norm norm : {Norm::kL2, Norm::kL1}) {
      const FlowField a = grad_smoothness_2nd(f, ew, norm);
      const FlowField n = testing::numeric_gradient(
          f, [&](const FlowField& p) { return smoothness_2nd(p, ew, norm); });
      if (norm == Norm::kL2) {
        compare(a, n, all);
      } else {
        const testing::KinkDistance k = testing::kink_distance(f);
        compare(a, n, [&](int comp, std::size_t i) {
          return (comp == 0 ? k.u[i] : k.v[i]) >= 1e-3;
        });
      }
    }

    FlowField ref = f;
    for (double& v : ref.u.values()) v += rng.uniform(-1.0, 1.0);
    for (double& v : ref.v.values()) v += rng.uniform(-1.0, 1.0);
    BoolMap region(w, h, 0);
    for (auto& b : region.values()) b = rng.coin(0.6);
    for (HgNormalization hn :
         {HgNormalization::kRegionPixels, HgNormalization::kFramePixels}) {
      const FlowField a = grad_homography_smoothness(f, ref, region, hn);
      const FlowField n = testing::numeric_gradient(f, [&](const FlowField& p) {
        return homography_smoothness(p, ref, region, hn);
      });
      compare(a, n, [&](int comp, std::size_t i) {
        const double d = comp == 0 ? f.u[i] - ref.u[i] : f.v[i] - ref.v[i];
        return std::abs(d) >= 1e-3;
      });
    }
  }
  const double elapsed = seconds_since(t0);
  return {failed == 0 && checked > 0 && elapsed < 60.0,
          fmt("%ld/%ld gradient entries within 1e-3 relative, %.2f s",
              checked - failed, checked, elapsed)};
}

// --- C6 ----------------------------------------------------------------------

Outcome segmentation_oracle() {
  Rng rng(600);
  int bad = 0, tie_sets = 0;
  for (int t = 0; t < 200; ++t) {
    const RawMaskSet set = testing::random_mask_set(rng, 16, 16, 8);
    std::set<std::int64_t> areas;
    for (const BinaryMask& m : set.masks) areas.insert(m.area);
    tie_sets += areas.size() < set.size();
    int num = 0;
    bool bg = false;
    const auto ids = testing::brute_segmentation(bits_of(set), 16, 16, &num, &bg);
    const Segmentation seg = build_full_segmentation(set, 16, 16);
    bad += !(seg.ids == ids && seg.num_segments == num &&
             seg.background_id.has_value() == bg);
  }
  return {bad == 0, fmt("%d mismatches over 200 sets (%d with equal-area masks)",
                        bad, tie_sets)};
}

// --- C7 ----------------------------------------------------------------------

Outcome key_object_oracle() {
  Rng rng(700);
  const Image img(432, 224, 3, 0.5);
  int bad = 0;
  std::size_t selected = 0;
  for (int t = 0; t < 100; ++t) {
    const RawMaskSet set = testing::random_key_object_masks(rng);
    std::set<int> got;
    for (const KeyObject& o : select_key_objects(set, img)) got.insert(o.source_index);
    selected += got.size();
    bad += got != testing::brute_key_objects(bits_of(set));
  }
  return {bad == 0, fmt("%d mismatches over 100 sets (%zu objects selected)", bad,
                        selected)};
}

// --- C8 ----------------------------------------------------------------------

Outcome census_brightness() {
  Rng rng(800);
  int bad = 0;
  for (int t = 0; t < 10; ++t) {
    const Image a = testing::random_image(rng, 40, 30, 3, 0.05, 0.9);
    const Image b = testing::random_image(rng, 40, 30, 3, 0.05, 0.9);
    Image a2 = a, b2 = b;
    for (double& v : a2.values()) v += 0.04;
    for (double& v : b2.values()) v += 0.04;
    const double base = census_loss(a, b).value;
    bad += census_loss(a, b2).value != base;
    bad += census_loss(a2, b2).value != base;
    bad += !(census_distance_map(a, b2) == census_distance_map(a, b));
  }
  return {bad == 0, fmt("%d differences over 10 image pairs", bad)};
}

// --- C9 ----------------------------------------------------------------------

FeatureMap random_features(Rng& rng, int w, int h, int c) {
  FeatureMap f(w, h, c);
  for (float& v : f.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return f;
}

Outcome max_pool() {
  Rng rng(900);
  int perm_bad = 0, idem_bad = 0, brute_bad = 0;
  const Segmentation seg = testing::random_segmentation(rng, 24, 18, 7);
  const FeatureMap f = random_features(rng, 24, 18, 6);
  const FeatureMap p = segment_max_pool(f, seg);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    Segmentation r = seg;
    for (auto& id : r.ids.values()) id = perm[static_cast<std::size_t>(id)];
    perm_bad += !(segment_max_pool(f, r) == p);
  }
  idem_bad += !(segment_max_pool(p, seg) == p);

  for (int t = 0; t < 20; ++t) {
    const int n = rng.integer(1, 6);
    const Segmentation s = testing::random_segmentation(rng, 8, 6, n);
    const FeatureMap g = random_features(rng, 8, 6, 3);
    const FeatureMap q = segment_max_pool(g, s);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 8; ++x) {
        for (int c = 0; c < 3; ++c) {
          float m = -INFINITY;
          for (int j = 0; j < 6; ++j) {
            for (int i = 0; i < 8; ++i) {
              if (s.ids(i, j) == s.ids(x, y)) m = std::max(m, g.at(i, j, c));
            }
          }
          brute_bad += q.at(x, y, c) != m;
        }
      }
    }
  }
  return {perm_bad + idem_bad + brute_bad == 0,
          fmt("%d/50 relabelings differ, idempotence %s, %d brute-force mismatches",
              perm_bad, idem_bad ? "broken" : "holds", brute_bad)};
}

// --- C10 ---------------------------------------------------------------------

Outcome correlation() {
  Rng rng(1000);
  const FeatureMap f1 = random_features(rng, 15, 12, 8);
  const FeatureMap f2 = random_features(rng, 15, 12, 8);
  const FeatureMap c = correlation_volume(f1, f2);
  int bad = 0, values = 0;
  double worst = 0.0;
  for (const auto& [x, y] : std::vector<std::pair<int, int>>{{7, 6}, {0, 0}, {14, 11}, {3, 9}}) {
    for (int dy = -4; dy <= 4; ++dy) {
      for (int dx = -4; dx <= 4; ++dx) {
        double dot = 0.0;
        const int qx = x + dx, qy = y + dy;
        if (qx >= 0 && qy >= 0 && qx < 15 && qy < 12) {
          for (int k = 0; k < 8; ++k) dot += double(f1.at(x, y, k)) * f2.at(qx, qy, k);
        }
        const double e = std::abs(c.at(x, y, (dy + 4) * 9 + (dx + 4)) - dot / 8.0);
        worst = std::max(worst, e);
        bad += e > 1e-6;
        ++values;
      }
    }
  }
  return {c.channels() == 81 && bad == 0,
          fmt("%d channels, %d/%d hand dot products within 1e-6 (worst %.1g)",
              c.channels(), values - bad, values, worst)};
}

// --- C11 ---------------------------------------------------------------------

FlowField constant_flow(int w, int h, double u, double v) {
  FlowField f(w, h);
  for (double& x : f.u.values()) x = u;
  for (double& x : f.v.values()) x = v;
  return f;
}

Outcome metrics_and_total() {
  Rng rng(1100);
  FlowField gt(23, 17), est(23, 17);
  for (std::size_t i = 0; i < gt.u.size(); ++i) {
    gt.u[i] = rng.integer(-400, 400) / 8.0;
    gt.v[i] = rng.integer(-400, 400) / 8.0;
    est.u[i] = gt.u[i] + 3.0;
    est.v[i] = gt.v[i] + 4.0;
  }
  const double e = epe(est, gt);
  const double fl_same = fl_rate(gt, gt);
  const double fl_big = fl_rate(constant_flow(8, 8, 96, 0), constant_flow(8, 8, 100, 0));
  const double fl_small = fl_rate(constant_flow(8, 8, 6, 0), constant_flow(8, 8, 10, 0));
  const LossReport r = total_loss(1.0, 2.0, 3.0);
  const double hand = 1.0 + 0.1 * 2.0 + 0.1 * 3.0;
  const bool ok = e == 5.0 && fl_same == 0.0 && fl_big == 0.0 && fl_small == 100.0 &&
                  r.w_aug == 0.1 && r.w_hg == 0.1 && r.total == hand;
  return {ok, fmt("EPE %.17g, Fl %g%%/%g%%/%g%%, total(1,2,3) = %.17g", e, fl_same,
                  fl_big, fl_small, r.total)};
}

// --- C12 ---------------------------------------------------------------------

Outcome io_round_trips() {
  Rng rng(1200);
  TempDir dir("samflow_acc12");
  int flo_bad = 0, kitti_bad = 0, rle_bad = 0;
  for (int t = 0; t < 50; ++t) {
    const FlowField f = testing::random_float_flow(rng, rng.integer(1, 48),
                                                   rng.integer(1, 32), 150.0);
    write_flo(dir / "f.flo", f);
    const FlowField g = read_flo(dir / "f.flo");
    flo_bad += !(g.u == f.u && g.v == f.v && decode_flo(encode_flo(f)) == g);
  }
  for (int t = 0; t < 50; ++t) {
    FlowField f = testing::random_flow(rng, rng.integer(1, 48), rng.integer(1, 32), 300.0);
    f.valid = BoolMap(f.width(), f.height(), 1);
    for (auto& v : f.valid.values()) v = rng.coin(0.9);
    write_kitti_flow_png(dir / "k.png", f);
    const FlowField g = read_kitti_flow_png(dir / "k.png");
    bool ok = g.width() == f.width() && g.height() == f.height();
    for (int y = 0; ok && y < f.height(); ++y) {
      for (int x = 0; ok && x < f.width(); ++x) {
        ok = g.is_valid(x, y) == f.is_valid(x, y);
        if (ok && f.is_valid(x, y)) {
          ok = std::abs(g.u(x, y) - f.u(x, y)) <= 1.0 / 64 &&
               std::abs(g.v(x, y) - f.v(x, y)) <= 1.0 / 64;
        }
      }
    }
    kitti_bad += !ok;
  }
  for (int t = 0; t < 50; ++t) {
    const int w = rng.integer(1, 40), h = rng.integer(1, 30);
    BoolMap m(w, h, 0);
    const double p = rng.uniform(0.0, 1.0);
    for (auto& b : m.values()) b = rng.coin(p);
    const auto counts = encode_rle(m);
    const BoolMap back = decode_rle(counts, w, h);
    bool ok = back == m && encode_rle(back) == counts;
    const RawMaskSet set = testing::random_mask_set(rng, w, h, 4);
    ok = ok && format_masks(parse_masks(format_masks(set))) == format_masks(set);
    rle_bad += !ok;
  }
  return {flo_bad + kitti_bad + rle_bad == 0,
          fmt("failures: .flo %d/50, KITTI PNG %d/50, RLE %d/50", flo_bad, kitti_bad,
              rle_bad)};
}

// --- C13 ---------------------------------------------------------------------

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      out[fs::relative(e.path(), root).generic_string()] = read_binary_file(e.path());
    }
  }
  return out;
}

Outcome cli_determinism() {
  TempDir in("samflow_acc13");
  Rng rng(1300);
  const RawMaskSet masks = testing::random_key_object_masks(rng);
  const int w = masks.width, h = masks.height;
  const Homography hom = testing::random_homography(rng);
  FlowField fwd = testing::homography_flow(hom, w, h);
  const FlowField bwd = testing::homography_flow(hom.inverse(), w, h);
  for (int k = 0; k < 2000; ++k) {
    fwd.set(rng.integer(0, w - 1), rng.integer(0, h - 1),
            {rng.uniform(-20, 20), rng.uniform(-20, 20)});
  }
  write_masks(in / "masks.json", masks);
  write_image_png(in / "a.png", testing::smooth_image(rng, w, h, 3));
  write_image_png(in / "b.png", testing::smooth_image(rng, w, h, 3));
  write_flo(in / "fwd.flo", fwd);
  write_flo(in / "bwd.flo", bwd);
  write_kitti_flow_png(in / "gt.png", bwd);

  // Key objects first: augment reads its cache.
  cli::KeyObjectsOptions ko{in / "a.png", in / "masks.json", in / "cache", "s0", {}};
  cli::run_keyobjects(ko);

  std::vector<std::pair<std::string, std::function<std::string(const fs::path&)>>> cmds;
  cmds.emplace_back("segment", [&](const fs::path& out) {
    return cli::run_segment({in / "masks.json", std::nullopt, out});
  });
  cmds.emplace_back("refine", [&](const fs::path& out) {
    cli::RefineOptions o{in / "a.png", in / "b.png", in / "fwd.flo", in / "bwd.flo",
                         in / "masks.json", out, {}};
    o.cfg.workers = 4;
    return cli::run_refine(o);
  });
  cmds.emplace_back("keyobjects", [&](const fs::path& out) {
    return cli::run_keyobjects({in / "a.png", in / "masks.json", out, "s0", {}});
  });
  cmds.emplace_back("augment", [&](const fs::path& out) {
    cli::AugmentOptions o;
    o.img1 = in / "a.png";
    o.img2 = in / "b.png";
    o.flow = in / "fwd.flo";
    o.objects = in / "cache/s0";
    o.pred = in / "fwd.flo";
    o.out_dir = out;
    o.cfg.seed = 7;
    return cli::run_augment(o);
  });
  cmds.emplace_back("losses", [&](const fs::path& out) {
    cli::LossesOptions o;
    o.img1 = in / "a.png";
    o.img2 = in / "b.png";
    o.flow_fwd = in / "fwd.flo";
    o.flow_bwd = in / "bwd.flo";
    o.masks = in / "masks.json";
    o.out_dir = out;
    return cli::run_losses(o);
  });
  cmds.emplace_back("landscape", [&](const fs::path& out) {
    cli::LandscapeOptions o;
    o.flow = in / "fwd.flo";
    o.flow_bwd = in / "bwd.flo";
    o.masks = in / "masks.json";
    o.landscape.range = 4.0;
    o.out_dir = out;
    o.cfg.workers = 4;
    return cli::run_landscape(o);
  });
  cmds.emplace_back("metrics", [&](const fs::path& out) {
    cli::MetricsOptions o;
    o.est = in / "fwd.flo";
    o.gt = in / "gt.png";
    o.out_dir = out;
    return cli::run_metrics(o);
  });

  std::vector<std::string> differing;
  std::size_t files = 0;
  for (const auto& [name, run] : cmds) {
    const fs::path o1 = in / ("run1_" + name), o2 = in / ("run2_" + name);
    const std::string s1 = run(o1), s2 = run(o2);
    const auto a = snapshot(o1), b = snapshot(o2);
    files += a.size();
    if (s1 != s2 || a != b || a.empty()) differing.push_back(name);
  }
  std::string detail = fmt("%zu commands, %zu output files compared byte for byte",
                           cmds.size(), files);
  for (const std::string& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 planted-homography refinement", planted_refinement},
      {"C2 refinement gate thresholds", gate_conformance},
      {"C3 loss landscape on the two-region scene", landscape_shape},
      {"C4 gradient locality contrast", gradient_locality},
      {"C5 finite-difference gradients", finite_differences},
      {"C6 segmentation vs brute force", segmentation_oracle},
      {"C7 key-object rules vs brute force", key_object_oracle},
      {"C8 census brightness invariance", census_brightness},
      {"C9 segment max-pool", max_pool},
      {"C10 correlation volume", correlation},
      {"C11 metrics and total loss", metrics_and_total},
      {"C12 I/O round trips", io_round_trips},
      {"C13 CLI determinism", cli_determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
