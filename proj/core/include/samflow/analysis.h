#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "samflow/geometry.h"
#include "samflow/losses.h"
#include "samflow/report.h"
#include "samflow/types.h"

namespace samflow {

// --- metrics ----------------------------------------------------------------

inline constexpr double kFlAbsThreshold = 3.0;    // px
inline constexpr double kFlRelThreshold = 0.05;   // of |gt|

// Mean endpoint error over pixels set in `mask` (empty = all) and valid in
// gt. Throws kInvalidArgument when no pixel qualifies.
double epe(const FlowField& est, const FlowField& gt, const BoolMap& mask = {});

// Percentage of evaluated pixels with endpoint error > 3 px and
// > 0.05 |gt|. Same evaluation set and errors as epe().
double fl_rate(const FlowField& est, const FlowField& gt,
               const BoolMap& mask = {});

struct MetricsReport {
  std::optional<double> epe_all, epe_noc, epe_occ;
  std::optional<double> fl_all, fl_noc, fl_occ;
  std::optional<double> epe_bg, epe_fg;
  std::optional<double> fl_bg, fl_fg;
  std::size_t n_all = 0, n_noc = 0, n_occ = 0, n_bg = 0, n_fg = 0;
  std::vector<std::string> notes;  // one per omitted split
};

// all / noc / occ splits from `occluded` (empty = nothing occluded), plus
// bg / fg when `fg` is given. Empty splits are omitted with a note.
MetricsReport metrics_with_splits(const FlowField& est, const FlowField& gt,
                                  const BoolMap& occluded = {},
                                  const BoolMap& fg = {});

// Present metrics then the split counts.
Report to_report(const MetricsReport& m);

// --- loss landscape ---------------------------------------------------------

struct LandscapeConfig {
  double range = 20.0;  // sweep covers [-range, range]
  double step = 0.5;
  Norm norm = Norm::kL1;
  int workers = 1;
};

struct LandscapeCurve {
  std::vector<double> shifts;
  std::vector<double> losses;
  double argmin_shift = 0.0;  // first minimum in sweep order
};

// F_s(x, y) = F(x - s, y): bilinear along x, border replicated. The valid
// mask, if any, is dropped.
FlowField translate_flow_x(const FlowField& flow, double shift);

// Shifts k * step for every integer k with |k * step| <= range; for each,
// smoothness_2nd(translate_flow_x(flow, s), edge_weights(seg), norm).
LandscapeCurve landscape_sweep(const FlowField& flow, const Segmentation& seg,
                               const LandscapeConfig& cfg = {});

// "shift,loss" header then one row per point.
std::string format_curve_csv(const LandscapeCurve& curve);
void write_curve_csv(const std::filesystem::path& path,
                     const LandscapeCurve& curve);

// --- gradient maps ----------------------------------------------------------

enum class GradientLoss { kTraditional, kHomography };

struct GradientMapConfig {
  Norm norm = Norm::kL2;  // traditional loss only
  // Traditional loss weights; segment-boundary weights from `seg` when unset.
  std::optional<EdgeWeights> edge;
  RefineConfig refine;
  HgNormalization hg_normalization = HgNormalization::kRegionPixels;
};

struct GradientMap {
  FlowField raw;             // d loss / d (u, v)
  Plane<double> magnitude;   // |raw| min-max normalized to [0, 1]
  BoolMap region;            // refined region (homography loss only)
};

GradientMap gradient_field_map(const FlowField& flow, const Segmentation& seg,
                               const OcclusionMap& occ, GradientLoss loss,
                               const GradientMapConfig& cfg = {});

// Pixels of `region` (empty = whole frame) whose normalized magnitude
// renders as a nonzero 8-bit level.
std::size_t gradient_support(const Plane<double>& magnitude,
                             const BoolMap& region = {});

}  // namespace samflow
