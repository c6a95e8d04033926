#pragma once

// In-process implementations of the samflow subcommands. Each run_* call
// writes its artifacts under `out_dir` and returns the one-line JSON summary
// that the binary prints on success. Failures throw samflow::Error.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "samflow/analysis.h"
#include "samflow/augment.h"
#include "samflow/geometry.h"
#include "samflow/losses.h"
#include "samflow/masks.h"

namespace samflow::cli {

namespace fs = std::filesystem;

enum class EdgeMode { kImage, kSam };

struct Dims {
  int width = 0;
  int height = 0;
};

// "WxH" -> Dims; throws kInvalidArgument.
Dims parse_dims(const std::string& text);

// Worker count from SAMFLOW_WORKERS, else 1.
int default_workers();

// Knobs shared by the flow-processing commands.
struct RunConfig {
  RefineConfig refine;
  OcclusionConfig occlusion;
  PhotometricConfig photometric;
  double w_aug = kDefaultAugWeight;
  double w_hg = kDefaultHgWeight;
  Norm norm = Norm::kL1;
  EdgeMode edge_mode = EdgeMode::kSam;
  double edge_lambda = kDefaultEdgeLambda;
  HgNormalization hg_normalization = HgNormalization::kRegionPixels;
  std::optional<Dims> resize;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct SegmentOptions {
  fs::path masks;
  std::optional<Dims> dims;  // required when the mask file is empty
  fs::path out_dir;
};
std::string run_segment(const SegmentOptions& opt);

struct RefineOptions {
  fs::path img1, img2, flow_fwd, flow_bwd;
  std::optional<fs::path> masks;  // whole frame is one region when absent
  fs::path out_dir;
  RunConfig cfg;
};
std::string run_refine(const RefineOptions& opt);

struct KeyObjectsOptions {
  fs::path image;
  fs::path masks;
  fs::path out_dir;  // cache root
  std::string sample = "sample";
  KeyObjectRules rules;
};
std::string run_keyobjects(const KeyObjectsOptions& opt);

struct AugmentOptions {
  fs::path img1, img2, flow;
  std::optional<fs::path> objects;  // key-object cache sample directory
  std::optional<fs::path> pred;     // flow to score against the target
  fs::path out_dir;
  AugmentConfig augment;
  bool affine = true;
  RunConfig cfg;
};
std::string run_augment(const AugmentOptions& opt);

struct LossesOptions {
  fs::path img1, img2, flow_fwd, flow_bwd;
  std::optional<fs::path> masks;
  // Self-supervision term: predicted flow, target flow and validity mask.
  std::optional<fs::path> aug_pred, aug_target, aug_valid;
  fs::path out_dir;
  RunConfig cfg;
};
std::string run_losses(const LossesOptions& opt);

struct LandscapeOptions {
  std::optional<fs::path> flow;          // flow patch
  std::optional<fs::path> segmentation;  // 16-bit ID PNG
  std::optional<fs::path> masks;         // or a mask file
  std::optional<fs::path> flow_bwd;      // occlusion for the homography map
  // Built-in two-region scene: flow step `synthetic_offset` px left of the
  // segment boundary.
  bool synthetic = false;
  double synthetic_offset = 10.0;
  fs::path out_dir;
  LandscapeConfig landscape;
  Norm grad_norm = Norm::kL2;
  RunConfig cfg;
};
std::string run_landscape(const LandscapeOptions& opt);

struct MetricsOptions {
  fs::path est, gt;
  std::optional<fs::path> occ;  // occluded = nonzero
  std::optional<fs::path> noc;  // non-occluded = nonzero
  std::optional<fs::path> fg;
  fs::path out_dir;
  std::string report_name = "metrics.json";
};
std::string run_metrics(const MetricsOptions& opt);

// Two-region scene used by the landscape command and its tests: the
// segment boundary sits at column width / 2, the flow steps from 0 to
// `magnitude` at column width / 2 - offset.
struct StepScene {
  FlowField flow;
  FlowField aligned;  // step exactly on the boundary
  Segmentation seg;
};
StepScene make_step_scene(int width, int height, double offset,
                          double magnitude = 4.0);

}  // namespace samflow::cli
