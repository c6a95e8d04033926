#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.h"

namespace {

using namespace samflow;
using namespace samflow::cli;

struct Flags {
  std::string resize;
  std::string norm = "l1";
  std::string edge_mode = "sam";
  std::string hg_norm = "region";
};

void add_run_flags(CLI::App* cmd, RunConfig& cfg, Flags& f) {
  cmd->add_option("--max-regions", cfg.refine.max_regions,
                  "Candidate regions per frame")
      ->capture_default_str()->check(CLI::NonNegativeNumber);
  cmd->add_option("--min-reliable", cfg.refine.min_reliable,
                  "Minimum reliable-pixel fraction")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--min-inliers", cfg.refine.min_inliers,
                  "Minimum RANSAC inlier ratio")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--reproj-thresh", cfg.refine.ransac.reproj_thresh,
                  "RANSAC inlier threshold in px")
      ->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--ransac-iters", cfg.refine.ransac.iterations,
                  "Maximum RANSAC iterations")
      ->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  cmd->add_option("--w-aug", cfg.w_aug, "Augmentation loss weight")
      ->capture_default_str();
  cmd->add_option("--w-hg", cfg.w_hg, "Homography loss weight")
      ->capture_default_str();
  cmd->add_option("--norm", f.norm, "Smoothness norm")
      ->capture_default_str()->check(CLI::IsMember({"l1", "l2"}));
  cmd->add_option("--edge-mode", f.edge_mode, "Smoothness edge weights")
      ->capture_default_str()->check(CLI::IsMember({"image", "sam"}));
  cmd->add_option("--edge-lambda", cfg.edge_lambda, "Image edge weight lambda")
      ->capture_default_str();
  cmd->add_option("--hg-norm", f.hg_norm,
                  "Homography loss normalization: region or frame pixels")
      ->capture_default_str()->check(CLI::IsMember({"region", "frame"}));
  cmd->add_option("--alpha1", cfg.occlusion.alpha1, "Occlusion check alpha1")
      ->capture_default_str();
  cmd->add_option("--alpha2", cfg.occlusion.alpha2, "Occlusion check alpha2")
      ->capture_default_str();
  cmd->add_option("--resize", f.resize,
                  "Resize inputs to WxH first, e.g. 832x256");
  cmd->add_option("--workers", cfg.workers,
                  "Worker threads (default: $SAMFLOW_WORKERS or 1)")
      ->check(CLI::PositiveNumber);
}

void finish_run_flags(RunConfig& cfg, const Flags& f) {
  cfg.norm = f.norm == "l2" ? Norm::kL2 : Norm::kL1;
  cfg.edge_mode = f.edge_mode == "image" ? EdgeMode::kImage : EdgeMode::kSam;
  cfg.hg_normalization = f.hg_norm == "frame" ? HgNormalization::kFramePixels
                                              : HgNormalization::kRegionPixels;
  if (!f.resize.empty()) cfg.resize = parse_dims(f.resize);
}

template <typename T>
void add_opt_path(CLI::App* cmd, const std::string& name,
                  std::optional<T>& target, const std::string& help) {
  cmd->add_option_function<std::string>(
      name, [&target](const std::string& v) { target = T(v); }, help);
}

void print_error(const std::string& command, const std::string& kind,
                 const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samflow: mask-guided optical flow refinement tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "samflow 0.1.0");

  std::string active;
  std::function<std::string()> run;
  Flags flags;

  SegmentOptions seg;
  std::string seg_dims;
  auto* c_seg = app.add_subcommand("segment", "Masks -> full segmentation PNG");
  c_seg->add_option("--masks", seg.masks, "Mask JSON")->required();
  c_seg->add_option("--dims", seg_dims, "Frame size WxH (needed for empty mask files)");
  c_seg->add_option("--out", seg.out_dir, "Output directory")->required();
  c_seg->callback([&] {
    active = "segment";
    if (!seg_dims.empty()) seg.dims = parse_dims(seg_dims);
    run = [&] { return run_segment(seg); };
  });

  RefineOptions ref;
  ref.cfg.workers = 0;
  auto* c_ref = app.add_subcommand("refine", "Homography region refinement");
  c_ref->add_option("--img1", ref.img1, "Frame 1 PNG")->required();
  c_ref->add_option("--img2", ref.img2, "Frame 2 PNG")->required();
  c_ref->add_option("--flow-fwd", ref.flow_fwd, "Forward flow (.flo or KITTI .png)")->required();
  c_ref->add_option("--flow-bwd", ref.flow_bwd, "Backward flow")->required();
  add_opt_path(c_ref, "--masks", ref.masks, "Mask JSON (default: one region)");
  c_ref->add_option("--out", ref.out_dir, "Output directory")->required();
  add_run_flags(c_ref, ref.cfg, flags);
  c_ref->callback([&] {
    active = "refine";
    finish_run_flags(ref.cfg, flags);
    run = [&] { return run_refine(ref); };
  });

  KeyObjectsOptions ko;
  auto* c_ko = app.add_subcommand("keyobjects", "Select and cache key objects");
  c_ko->add_option("--image", ko.image, "Frame PNG")->required();
  c_ko->add_option("--masks", ko.masks, "Mask JSON")->required();
  c_ko->add_option("--out", ko.out_dir, "Cache root directory")->required();
  c_ko->add_option("--sample", ko.sample, "Sample name")->capture_default_str();
  c_ko->add_option("--min-overlaps", ko.rules.min_overlaps,
                   "Minimum overlapping masks")->capture_default_str();
  c_ko->add_option("--min-fill", ko.rules.min_fill,
                   "Minimum mask/bbox area ratio")->capture_default_str();
  c_ko->callback([&] {
    active = "keyobjects";
    run = [&] { return run_keyobjects(ko); };
  });

  AugmentOptions aug;
  auto* c_aug = app.add_subcommand("augment", "Paste key objects and build the flow target");
  c_aug->add_option("--img1", aug.img1, "Frame 1 PNG")->required();
  c_aug->add_option("--img2", aug.img2, "Frame 2 PNG")->required();
  c_aug->add_option("--flow", aug.flow, "Base flow")->required();
  add_opt_path(c_aug, "--objects", aug.objects, "Key-object cache sample directory");
  add_opt_path(c_aug, "--pred", aug.pred, "Predicted flow to score against the target");
  c_aug->add_option("--out", aug.out_dir, "Output directory")->required();
  c_aug->add_option("--seed", aug.cfg.seed, "Random seed")->capture_default_str();
  c_aug->add_option("--max-motion", aug.augment.max_motion,
                    "Per-object motion bound in px")->capture_default_str();
  c_aug->add_option("--max-translation", aug.augment.max_translation,
                    "Affine translation bound in px")->capture_default_str();
  c_aug->add_flag("!--no-affine", aug.affine, "Skip the affine transform pair");
  std::string aug_resize;
  c_aug->add_option("--resize", aug_resize, "Resize inputs to WxH first");
  c_aug->callback([&] {
    active = "augment";
    if (!aug_resize.empty()) aug.cfg.resize = parse_dims(aug_resize);
    run = [&] { return run_augment(aug); };
  });

  LossesOptions los;
  los.cfg.workers = 0;
  auto* c_los = app.add_subcommand("losses", "Evaluate the training loss terms");
  c_los->add_option("--img1", los.img1, "Frame 1 PNG")->required();
  c_los->add_option("--img2", los.img2, "Frame 2 PNG")->required();
  c_los->add_option("--flow-fwd", los.flow_fwd, "Forward flow")->required();
  c_los->add_option("--flow-bwd", los.flow_bwd, "Backward flow")->required();
  add_opt_path(c_los, "--masks", los.masks, "Mask JSON (default: one region)");
  add_opt_path(c_los, "--aug-pred", los.aug_pred, "Flow predicted on the augmented pair");
  add_opt_path(c_los, "--aug-target", los.aug_target, "Augmentation flow target");
  add_opt_path(c_los, "--aug-valid", los.aug_valid, "Augmentation target valid mask PNG");
  c_los->add_option("--out", los.out_dir, "Output directory")->required();
  add_run_flags(c_los, los.cfg, flags);
  c_los->callback([&] {
    active = "losses";
    finish_run_flags(los.cfg, flags);
    run = [&] { return run_losses(los); };
  });

  LandscapeOptions land;
  land.cfg.workers = 0;
  std::string grad_norm = "l2";
  auto* c_land = app.add_subcommand("landscape", "Smoothness loss landscape and gradient maps");
  add_opt_path(c_land, "--flow", land.flow, "Flow patch");
  add_opt_path(c_land, "--segmentation", land.segmentation, "16-bit segment ID PNG");
  add_opt_path(c_land, "--masks", land.masks, "Mask JSON");
  add_opt_path(c_land, "--flow-bwd", land.flow_bwd, "Backward flow for occlusion");
  c_land->add_flag("--synthetic", land.synthetic, "Use the built-in two-region scene");
  c_land->add_option("--offset", land.synthetic_offset,
                     "Synthetic scene misalignment in px")->capture_default_str();
  c_land->add_option("--range", land.landscape.range, "Sweep range in px")->capture_default_str();
  c_land->add_option("--step", land.landscape.step, "Sweep step in px")->capture_default_str();
  c_land->add_option("--grad-norm", grad_norm, "Norm for the traditional gradient map")
      ->capture_default_str()->check(CLI::IsMember({"l1", "l2"}));
  c_land->add_option("--out", land.out_dir, "Output directory")->required();
  add_run_flags(c_land, land.cfg, flags);
  c_land->callback([&] {
    active = "landscape";
    finish_run_flags(land.cfg, flags);
    land.landscape.norm = land.cfg.norm;
    land.grad_norm = grad_norm == "l1" ? Norm::kL1 : Norm::kL2;
    run = [&] { return run_landscape(land); };
  });

  MetricsOptions met;
  auto* c_met = app.add_subcommand("metrics", "EPE and Fl with region splits");
  c_met->add_option("--est", met.est, "Estimated flow")->required();
  c_met->add_option("--gt", met.gt, "Ground-truth flow")->required();
  add_opt_path(c_met, "--occ", met.occ, "Occlusion mask PNG");
  add_opt_path(c_met, "--noc", met.noc, "Non-occlusion mask PNG");
  add_opt_path(c_met, "--fg", met.fg, "Foreground mask PNG");
  c_met->add_option("--out", met.out_dir, "Output directory")->required();
  c_met->add_option("--report", met.report_name, "Report file name (.json or .csv)")
      ->capture_default_str();
  c_met->callback([&] {
    active = "metrics";
    run = [&] { return run_metrics(met); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    for (const CLI::App* sub : app.get_subcommands()) active = sub->get_name();
    print_error(active, "usage", e.what());
    return 2;
  } catch (const Error& e) {
    print_error(active, std::string(to_string(e.kind())), e.what());
    return 1;
  }

  try {
    const int env_workers = default_workers();
    for (RunConfig* cfg : {&ref.cfg, &los.cfg, &land.cfg}) {
      if (cfg->workers == 0) cfg->workers = env_workers;
    }
    std::cout << run() << std::endl;
    return 0;
  } catch (const Error& e) {
    print_error(active, std::string(to_string(e.kind())), e.what());
  } catch (const std::exception& e) {
    print_error(active, "internal", e.what());
  }
  return 1;
}
