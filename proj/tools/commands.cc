#include "commands.h"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "samflow/core.h"
#include "samflow/io.h"
#include "samflow/report.h"

namespace samflow::cli {

namespace {

using nlohmann::ordered_json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void require_file(const fs::path& path, const char* flag) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    throw Error(ErrorKind::kIo, std::string("input ") + flag +
                                    " does not exist: " + path.string());
  }
}

void require_dir(const fs::path& path, const char* flag) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) {
    throw Error(ErrorKind::kIo, std::string("input ") + flag +
                                    " is not a directory: " + path.string());
  }
}

void make_out_dir(const fs::path& dir) {
  if (dir.empty()) throw Error(ErrorKind::kInvalidArgument, "--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());
}

// Re-throws library errors with the offending file in the message.
template <typename F>
auto with_file(const fs::path& path, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

Image load_image(const fs::path& path, const char* flag) {
  require_file(path, flag);
  return with_file(path, [&] { return read_image_png(path); });
}

FlowField load_flow(const fs::path& path, const char* flag) {
  require_file(path, flag);
  return with_file(path, [&] { return read_flow(path); });
}

RawMaskSet load_masks(const fs::path& path) {
  require_file(path, "--masks");
  return with_file(path, [&] { return read_masks(path); });
}

// Nearest-neighbour resample of the ID grid; the ID space is unchanged.
Segmentation resize_segmentation(const Segmentation& seg, int width,
                                 int height) {
  Segmentation out = seg;
  out.ids = Plane<std::int32_t>(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(seg.height() - 1,
                            static_cast<int>((y + 0.5) * seg.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(seg.width() - 1,
                              static_cast<int>((x + 0.5) * seg.width() / width));
      out.ids(x, y) = seg.ids(sx, sy);
    }
  }
  return out;
}

Segmentation segmentation_for(const std::optional<fs::path>& masks, int width,
                              int height) {
  if (!masks) return Segmentation::uniform(width, height);
  const RawMaskSet set = load_masks(*masks);
  const int w = set.size() > 0 ? set.width : width;
  const int h = set.size() > 0 ? set.height : height;
  Segmentation seg = with_file(*masks, [&] {
    return build_full_segmentation(set, w, h);
  });
  if (w != width || h != height) seg = resize_segmentation(seg, width, height);
  return seg;
}

// Inputs of the refine / losses pipeline after optional resizing.
struct FlowInputs {
  Image img1, img2;
  FlowField fwd, bwd;
};

FlowInputs load_flow_inputs(const fs::path& img1, const fs::path& img2,
                            const fs::path& fwd, const fs::path& bwd,
                            const RunConfig& cfg) {
  FlowInputs in{load_image(img1, "--img1"), load_image(img2, "--img2"),
                load_flow(fwd, "--flow-fwd"), load_flow(bwd, "--flow-bwd")};
  if (cfg.resize) {
    const auto [w, h] = *cfg.resize;
    in.img1 = resize_image(in.img1, w, h);
    in.img2 = resize_image(in.img2, w, h);
    in.fwd = resize_flow(in.fwd, w, h);
    in.bwd = resize_flow(in.bwd, w, h);
  }
  const int w = in.img1.width(), h = in.img1.height();
  require_same_dims(w, h, in.img2.width(), in.img2.height(), "--img2");
  require_same_dims(w, h, in.fwd.width(), in.fwd.height(), "--flow-fwd");
  require_same_dims(w, h, in.bwd.width(), in.bwd.height(), "--flow-bwd");
  return in;
}

RefineConfig refine_config(const RunConfig& cfg) {
  RefineConfig rc = cfg.refine;
  rc.ransac.seed = cfg.seed;
  rc.workers = std::max(1, cfg.workers);
  return rc;
}

EdgeWeights weights_for(const RunConfig& cfg, const Image& img,
                        const Segmentation& seg) {
  return cfg.edge_mode == EdgeMode::kImage ? edge_weights(img, cfg.edge_lambda)
                                           : edge_weights(seg);
}

const char* norm_name(Norm n) { return n == Norm::kL1 ? "l1" : "l2"; }

std::string regions_csv(const std::vector<RegionRefinement>& regions) {
  std::ostringstream os;
  os << "segment_id,region_pixels,occluded_pixels,correspondences,"
        "reliable_fraction,inlier_ratio,accepted,reject_reason";
  for (int i = 0; i < 9; ++i) os << ",h" << i / 3 << i % 3;
  os << "\n";
  for (const RegionRefinement& r : regions) {
    os << r.segment_id << ',' << r.region_pixels << ',' << r.occluded_pixels
       << ',' << r.correspondences_used << ',' << format_real(r.reliable_fraction)
       << ',' << format_real(r.inlier_ratio) << ',' << (r.accepted ? 1 : 0)
       << ',' << to_string(r.reject_reason);
    for (int i = 0; i < 9; ++i) {
      os << ',';
      if (r.homography) os << format_real(r.homography->matrix()[i]);
    }
    os << "\n";
  }
  return os.str();
}

ordered_json loss_json(const LossReport& lr) {
  ordered_json j;
  for (const auto& [name, value] : to_report(lr).fields) j[name] = value;
  return j;
}

ordered_json affine_json(const AugmentTransform& t) {
  ordered_json j;
  j["tx"] = t.params.tx;
  j["ty"] = t.params.ty;
  j["rotation"] = t.params.rotation;
  j["scale"] = t.params.scale;
  j["brightness"] = t.appearance.brightness;
  j["contrast"] = t.appearance.contrast;
  j["matrix"] = t.matrix;
  return j;
}

std::string summary(const ordered_json& j) { return j.dump(); }

}  // namespace

Dims parse_dims(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) {
    throw Error(ErrorKind::kInvalidArgument, "expected WxH, got '" + text + "'");
  }
  try {
    std::size_t n1 = 0, n2 = 0;
    const std::string ws = text.substr(0, x), hs = text.substr(x + 1);
    Dims d{std::stoi(ws, &n1), std::stoi(hs, &n2)};
    if (n1 != ws.size() || n2 != hs.size() || d.width <= 0 || d.height <= 0) {
      throw std::invalid_argument("bad dims");
    }
    return d;
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::kInvalidArgument, "expected WxH, got '" + text + "'");
  }
}

int default_workers() {
  const char* env = std::getenv("SAMFLOW_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 1024) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string("SAMFLOW_WORKERS must be a positive integer, got '") +
                    env + "'");
  }
  return static_cast<int>(n);
}

// --- segment ----------------------------------------------------------------

std::string run_segment(const SegmentOptions& opt) {
  const RawMaskSet set = load_masks(opt.masks);
  int w = set.width, h = set.height;
  if (set.size() == 0) {
    if (!opt.dims) {
      throw Error(ErrorKind::kInvalidArgument,
                  "mask file is empty; pass --dims WxH");
    }
    w = opt.dims->width;
    h = opt.dims->height;
  } else if (opt.dims) {
    require_same_dims(w, h, opt.dims->width, opt.dims->height, "--dims");
  }
  const Segmentation seg = build_full_segmentation(set, w, h);
  make_out_dir(opt.out_dir);
  write_segmentation_png(opt.out_dir / "segmentation.png", seg);

  ordered_json stats;
  stats["width"] = w;
  stats["height"] = h;
  stats["raw_masks"] = set.size();
  stats["num_segments"] = seg.num_segments;
  stats["has_background"] = seg.background_id.has_value();
  stats["background_id"] = seg.background_id ? ordered_json(*seg.background_id)
                                              : ordered_json(nullptr);
  stats["source_mask"] = seg.source_mask;
  write_text_file(opt.out_dir / "segment_stats.json", stats.dump(2) + "\n");

  ordered_json j;
  j["command"] = "segment";
  j["width"] = w;
  j["height"] = h;
  j["raw_masks"] = set.size();
  j["num_segments"] = seg.num_segments;
  j["has_background"] = seg.background_id.has_value();
  j["outputs"] = {"segmentation.png", "segment_stats.json"};
  return summary(j);
}

// --- refine -----------------------------------------------------------------

std::string run_refine(const RefineOptions& opt) {
  const RunConfig& cfg = opt.cfg;
  const FlowInputs in =
      load_flow_inputs(opt.img1, opt.img2, opt.flow_fwd, opt.flow_bwd, cfg);
  const int w = in.img1.width(), h = in.img1.height();
  const Segmentation seg = segmentation_for(opt.masks, w, h);
  const OcclusionMap occ = occlusion_fb(in.fwd, in.bwd, cfg.occlusion);
  const RefineResult refined =
      refine_regions(in.fwd, seg, occ, refine_config(cfg));

  PhotometricConfig pc = cfg.photometric;
  pc.occlusion = cfg.occlusion;
  const PhotometricResult ph = photometric_loss(in.img1, in.img2, in.fwd, in.bwd, pc);
  const double hg = homography_smoothness(in.fwd, refined.refined,
                                          refined.region_mask,
                                          cfg.hg_normalization);
  const LossReport lr = total_loss(ph.loss.value, 0.0, hg, cfg.w_aug, cfg.w_hg);
  const double smooth =
      smoothness_2nd(in.fwd, weights_for(cfg, in.img1, seg), cfg.norm);

  make_out_dir(opt.out_dir);
  write_flo(opt.out_dir / "refined.flo", refined.refined);
  write_mask_png(opt.out_dir / "region_mask.png", refined.region_mask);
  write_mask_png(opt.out_dir / "occlusion.png", occ.occluded);
  write_text_file(opt.out_dir / "regions.csv", regions_csv(refined.regions));
  Report losses = to_report(lr);
  losses.add("smooth", smooth);
  write_report(losses, opt.out_dir / "losses.json", ReportFormat::kJson);

  int accepted = 0;
  ordered_json regions = ordered_json::array();
  for (const RegionRefinement& r : refined.regions) {
    accepted += r.accepted;
    regions.push_back({{"segment_id", r.segment_id},
                       {"accepted", r.accepted},
                       {"reject_reason", to_string(r.reject_reason)}});
  }
  ordered_json j;
  j["command"] = "refine";
  j["width"] = w;
  j["height"] = h;
  j["num_segments"] = seg.num_segments;
  j["occluded_pixels"] = occ.count();
  j["candidates"] = refined.regions.size();
  j["accepted"] = accepted;
  j["regions"] = regions;
  j["losses"] = loss_json(lr);
  j["smooth"] = smooth;
  j["outputs"] = {"refined.flo", "region_mask.png", "occlusion.png",
                  "regions.csv", "losses.json"};
  return summary(j);
}

// --- keyobjects -------------------------------------------------------------

std::string run_keyobjects(const KeyObjectsOptions& opt) {
  const Image img = load_image(opt.image, "--image");
  const RawMaskSet set = load_masks(opt.masks);
  if (set.size() > 0) {
    require_same_dims(img.width(), img.height(), set.width, set.height,
                      "--masks vs --image");
  }
  const std::vector<KeyObject> objects = select_key_objects(set, img, opt.rules);
  make_out_dir(opt.out_dir);
  const fs::path dir = write_key_object_cache(opt.out_dir, opt.sample, objects);

  ordered_json list = ordered_json::array();
  for (const KeyObject& o : objects) {
    list.push_back({{"source_index", o.source_index},
                    {"bbox", {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h}},
                    {"overlap_count", o.overlap_count}});
  }
  ordered_json j;
  j["command"] = "keyobjects";
  j["raw_masks"] = set.size();
  j["key_objects"] = objects.size();
  j["objects"] = list;
  j["cache_dir"] = fs::relative(dir, opt.out_dir).generic_string();
  return summary(j);
}

// --- augment ----------------------------------------------------------------

std::string run_augment(const AugmentOptions& opt) {
  Image img1 = load_image(opt.img1, "--img1");
  Image img2 = load_image(opt.img2, "--img2");
  FlowField flow = load_flow(opt.flow, "--flow");
  if (opt.cfg.resize) {
    img1 = resize_image(img1, opt.cfg.resize->width, opt.cfg.resize->height);
    img2 = resize_image(img2, opt.cfg.resize->width, opt.cfg.resize->height);
    flow = resize_flow(flow, opt.cfg.resize->width, opt.cfg.resize->height);
  }
  std::vector<KeyObject> objects;
  if (opt.objects) {
    require_dir(*opt.objects, "--objects");
    objects = with_file(*opt.objects, [&] {
      return read_key_object_cache(*opt.objects);
    });
  }

  const std::uint64_t paste_seed = splitmix64(opt.cfg.seed ^ 0x1);
  const std::uint64_t affine_seed = splitmix64(opt.cfg.seed ^ 0x2);
  const std::vector<PasteSpec> drawn = sample_paste_specs(
      paste_seed, objects, img1.width(), img1.height(), opt.augment);
  std::vector<KeyObject> kept;
  std::vector<PasteSpec> specs;
  for (std::size_t k = 0; k < drawn.size(); ++k) {
    if (drawn[k].x < 0) continue;
    kept.push_back(objects[k]);
    specs.push_back(drawn[k]);
  }
  AugmentedSample sample = paste_objects(img1, img2, flow, kept, specs);

  AugmentTransform t1, t2;
  if (opt.affine) {
    std::tie(t1, t2) = sample_transforms(affine_seed, img1.width(),
                                         img1.height(), opt.augment);
    sample = apply_affine_pair(sample, t1, t2);
  }

  std::optional<LossValue> aug_loss;
  if (opt.pred) {
    const FlowField pred = load_flow(*opt.pred, "--pred");
    aug_loss = self_supervision_loss(pred, sample);
  }

  make_out_dir(opt.out_dir);
  write_image_png(opt.out_dir / "img1.png", sample.img1);
  write_image_png(opt.out_dir / "img2.png", sample.img2);
  write_flo(opt.out_dir / "flow_target.flo", sample.flow_target);
  write_mask_png(opt.out_dir / "valid.png", sample.valid);
  write_mask_png(opt.out_dir / "occluded.png", sample.occluded);

  ordered_json tj;
  tj["seed"] = opt.cfg.seed;
  tj["affine"] = opt.affine;
  tj["t1"] = affine_json(t1);
  tj["t2"] = affine_json(t2);
  tj["pastes"] = ordered_json::array();
  for (std::size_t k = 0; k < specs.size(); ++k) {
    tj["pastes"].push_back({{"object", kept[k].source_index},
                            {"x", specs[k].x},
                            {"y", specs[k].y},
                            {"dx", specs[k].dx},
                            {"dy", specs[k].dy}});
  }
  write_text_file(opt.out_dir / "transforms.json", tj.dump(2) + "\n");

  std::size_t valid = 0;
  for (std::uint8_t v : sample.valid.values()) valid += v != 0;
  ordered_json j;
  j["command"] = "augment";
  j["seed"] = opt.cfg.seed;
  j["objects_available"] = objects.size();
  j["objects_pasted"] = specs.size();
  j["valid_pixels"] = valid;
  if (aug_loss) {
    j["aug"] = aug_loss->value;
    j["aug_empty"] = aug_loss->empty;
  }
  j["outputs"] = {"img1.png", "img2.png", "flow_target.flo", "valid.png",
                  "occluded.png", "transforms.json"};
  return summary(j);
}

// --- losses -----------------------------------------------------------------

std::string run_losses(const LossesOptions& opt) {
  const RunConfig& cfg = opt.cfg;
  const FlowInputs in =
      load_flow_inputs(opt.img1, opt.img2, opt.flow_fwd, opt.flow_bwd, cfg);
  const int w = in.img1.width(), h = in.img1.height();
  const Segmentation seg = segmentation_for(opt.masks, w, h);

  PhotometricConfig pc = cfg.photometric;
  pc.occlusion = cfg.occlusion;
  const PhotometricResult ph =
      photometric_loss(in.img1, in.img2, in.fwd, in.bwd, pc);
  const RefineResult refined =
      refine_regions(in.fwd, seg, ph.occ_fwd, refine_config(cfg));
  const double hg = homography_smoothness(in.fwd, refined.refined,
                                          refined.region_mask,
                                          cfg.hg_normalization);

  double aug = 0.0;
  const bool have_aug = opt.aug_pred || opt.aug_target;
  if (have_aug) {
    if (!opt.aug_pred || !opt.aug_target) {
      throw Error(ErrorKind::kInvalidArgument,
                  "--aug-pred and --aug-target go together");
    }
    AugmentedSample target;
    target.flow_target = load_flow(*opt.aug_target, "--aug-target");
    if (opt.aug_valid) {
      require_file(*opt.aug_valid, "--aug-valid");
      target.valid = with_file(*opt.aug_valid,
                               [&] { return read_mask_png(*opt.aug_valid); });
    }
    aug = self_supervision_loss(load_flow(*opt.aug_pred, "--aug-pred"), target)
              .value;
  }

  const LossReport lr = total_loss(ph.loss.value, aug, hg, cfg.w_aug, cfg.w_hg);
  const double smooth =
      smoothness_2nd(in.fwd, weights_for(cfg, in.img1, seg), cfg.norm);

  make_out_dir(opt.out_dir);
  Report report = to_report(lr);
  report.add("smooth", smooth);
  report.add("ph_fwd_l1", ph.forward.l1);
  report.add("ph_fwd_ssim", ph.forward.ssim);
  report.add("ph_fwd_census", ph.forward.census);
  report.add("ph_bwd_l1", ph.backward.l1);
  report.add("ph_bwd_ssim", ph.backward.ssim);
  report.add("ph_bwd_census", ph.backward.census);
  write_report(report, opt.out_dir / "losses.json", ReportFormat::kJson);
  write_report(report, opt.out_dir / "losses.csv", ReportFormat::kCsv);

  ordered_json j;
  j["command"] = "losses";
  j["norm"] = norm_name(cfg.norm);
  j["edge_mode"] = cfg.edge_mode == EdgeMode::kImage ? "image" : "sam";
  j["ph_empty"] = ph.loss.empty;
  j["aug_provided"] = have_aug;
  j["losses"] = loss_json(lr);
  j["smooth"] = smooth;
  j["outputs"] = {"losses.json", "losses.csv"};
  return summary(j);
}

// --- landscape --------------------------------------------------------------

StepScene make_step_scene(int width, int height, double offset,
                          double magnitude) {
  if (width < 4 || height < 1) {
    throw Error(ErrorKind::kInvalidArgument, "step scene too small");
  }
  const int b = width / 2;
  StepScene s{FlowField(width, height), FlowField(width, height), {}};
  s.seg.ids = Plane<std::int32_t>(width, height);
  s.seg.num_segments = 2;
  s.seg.source_mask = {0, 1};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      s.flow.u(x, y) = x >= b - offset ? magnitude : 0.0;
      s.aligned.u(x, y) = x >= b ? magnitude : 0.0;
      s.seg.ids(x, y) = x >= b ? 1 : 0;
    }
  }
  return s;
}

std::string run_landscape(const LandscapeOptions& opt) {
  FlowField flow;
  Segmentation seg;
  if (opt.synthetic) {
    const Dims d = opt.cfg.resize.value_or(Dims{128, 64});
    StepScene scene = make_step_scene(d.width, d.height, opt.synthetic_offset);
    flow = std::move(scene.flow);
    seg = std::move(scene.seg);
  } else {
    if (!opt.flow) {
      throw Error(ErrorKind::kInvalidArgument, "--flow or --synthetic is required");
    }
    flow = load_flow(*opt.flow, "--flow");
    if (opt.segmentation) {
      require_file(*opt.segmentation, "--segmentation");
      seg = with_file(*opt.segmentation,
                      [&] { return read_segmentation_png(*opt.segmentation); });
      require_same_dims(flow.width(), flow.height(), seg.width(), seg.height(),
                        "--segmentation");
    } else {
      seg = segmentation_for(opt.masks, flow.width(), flow.height());
    }
  }

  OcclusionMap occ{BoolMap(flow.width(), flow.height(), 0)};
  if (opt.flow_bwd) {
    const FlowField bwd = load_flow(*opt.flow_bwd, "--flow-bwd");
    occ = occlusion_fb(flow, bwd, opt.cfg.occlusion);
  }

  LandscapeConfig lc = opt.landscape;
  lc.workers = std::max(1, opt.cfg.workers);
  const LandscapeCurve curve = landscape_sweep(flow, seg, lc);

  GradientMapConfig gc;
  gc.norm = opt.grad_norm;
  gc.refine = refine_config(opt.cfg);
  gc.hg_normalization = opt.cfg.hg_normalization;
  const GradientMap trad =
      gradient_field_map(flow, seg, occ, GradientLoss::kTraditional, gc);
  const GradientMap homo =
      gradient_field_map(flow, seg, occ, GradientLoss::kHomography, gc);

  make_out_dir(opt.out_dir);
  write_curve_csv(opt.out_dir / "curve.csv", curve);
  write_gray_png(opt.out_dir / "grad_traditional.png", trad.magnitude);
  write_flo(opt.out_dir / "grad_traditional.flo", trad.raw);
  write_gray_png(opt.out_dir / "grad_homography.png", homo.magnitude);
  write_flo(opt.out_dir / "grad_homography.flo", homo.raw);

  std::size_t i0 = 0;
  for (std::size_t i = 0; i < curve.shifts.size(); ++i) {
    if (curve.shifts[i] == 0.0) i0 = i;
  }
  ordered_json j;
  j["command"] = "landscape";
  j["points"] = curve.shifts.size();
  j["step"] = lc.step;
  j["norm"] = norm_name(lc.norm);
  j["loss_at_zero"] = curve.losses[i0];
  j["argmin_shift"] = curve.argmin_shift;
  j["support_traditional"] = gradient_support(trad.magnitude);
  j["support_homography"] = gradient_support(homo.magnitude);
  j["outputs"] = {"curve.csv", "grad_traditional.png", "grad_traditional.flo",
                  "grad_homography.png", "grad_homography.flo"};
  return summary(j);
}

// --- metrics ----------------------------------------------------------------

std::string run_metrics(const MetricsOptions& opt) {
  const FlowField est = load_flow(opt.est, "--est");
  const FlowField gt = load_flow(opt.gt, "--gt");
  require_same_dims(est.width(), est.height(), gt.width(), gt.height(),
                    "--est vs --gt");
  if (opt.occ && opt.noc) {
    throw Error(ErrorKind::kInvalidArgument, "pass --occ or --noc, not both");
  }
  const auto load_mask = [&](const fs::path& p, const char* flag) {
    require_file(p, flag);
    BoolMap m = with_file(p, [&] { return read_mask_png(p); });
    require_same_dims(gt.width(), gt.height(), m.width(), m.height(), flag);
    return m;
  };
  BoolMap occ;
  if (opt.occ) occ = load_mask(*opt.occ, "--occ");
  if (opt.noc) {
    occ = load_mask(*opt.noc, "--noc");
    for (std::uint8_t& v : occ.values()) v = v ? 0 : 1;
  }
  BoolMap fg;
  if (opt.fg) fg = load_mask(*opt.fg, "--fg");

  const MetricsReport m = metrics_with_splits(est, gt, occ, fg);
  const Report report = to_report(m);
  make_out_dir(opt.out_dir);
  const fs::path out = opt.out_dir / opt.report_name;
  write_report(report, out, report_format_for(out));

  ordered_json j;
  j["command"] = "metrics";
  for (const auto& [name, value] : report.fields) j[name] = value;
  j["notes"] = m.notes;
  j["outputs"] = {opt.report_name};
  return summary(j);
}

}  // namespace samflow::cli
