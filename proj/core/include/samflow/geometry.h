#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "samflow/types.h"

namespace samflow {

// 3x3 projective transform, row-major. Stored normalized: h22 = 1 when
// |h22| > 1e-8, otherwise unit Frobenius norm.
class Homography {
 public:
  static constexpr double kSingularDenominator = 1e-9;

  Homography();  // identity
  // Throws kDegenerate when the matrix is non-finite or (near-)singular.
  explicit Homography(const std::array<double, 9>& m);

  static Homography translation(double dx, double dy);

  double operator()(int row, int col) const { return m_[row * 3 + col]; }
  const std::array<double, 9>& matrix() const noexcept { return m_; }
  double determinant() const;

  // Throws kSingular when the projective denominator is below
  // kSingularDenominator in magnitude.
  Vec2 project(Vec2 p) const;
  std::optional<Vec2> try_project(Vec2 p) const;

  Homography inverse() const;

 private:
  std::array<double, 9> m_;
};

// ||project(h, src) - dst||_2, or +inf when the point maps to infinity.
double reprojection_error(const Homography& h, Vec2 src, Vec2 dst);

// Normalized DLT (Hartley conditioning + SVD) over >= 4 correspondences.
// Throws kInvalidArgument on bad input sizes and kDegenerate when the
// configuration does not determine a unique non-singular homography.
Homography estimate_homography_dlt(std::span<const Vec2> src,
                                   std::span<const Vec2> dst);

struct RansacConfig {
  double reproj_thresh = 3.0;  // px
  int iterations = 2000;       // upper bound on minimal-sample draws
  std::uint64_t seed = 0;
  // Stop once the best model so far makes the probability of having missed
  // a better all-inlier sample fall below 1 - confidence. 1.0 disables it.
  double confidence = 0.999;
};

struct RansacResult {
  Homography homography;
  double inlier_ratio = 0.0;
  std::vector<std::uint8_t> inliers;  // per correspondence
  int iterations_run = 0;
};

// Seeded RANSAC with a 4-point DLT minimal solver. The best model (most
// inliers, first found on ties) is refit on all its inliers; reported inliers
// are those of the returned model. Throws kDegenerate when every minimal
// sample was degenerate.
RansacResult ransac_homography(std::span<const Vec2> src,
                               std::span<const Vec2> dst,
                               const RansacConfig& cfg);

// refined(p) = project(h, p) - p on the region; valid = region.
// Throws kSingular when any region pixel maps to infinity.
FlowField flow_from_homography(const Homography& h, const BoolMap& region);

enum class RejectReason { kNone, kTooFewReliable, kLowInliers, kDegenerate };

std::string_view to_string(RejectReason reason);

struct RegionRefinement {
  int segment_id = -1;
  int region_pixels = 0;
  int occluded_pixels = 0;
  int correspondences_used = 0;
  double inlier_ratio = 0.0;
  double reliable_fraction = 0.0;
  std::optional<Homography> homography;
  bool accepted = false;
  RejectReason reject_reason = RejectReason::kNone;
};

struct RefineConfig {
  int max_regions = 6;
  double min_reliable = 0.2;
  double min_inliers = 0.5;
  RansacConfig ransac;
  int workers = 1;
};

struct RefineResult {
  FlowField refined;
  BoolMap region_mask;  // pixels overwritten by an accepted homography
  std::vector<RegionRefinement> regions;  // candidate rank order
};

// Picks the segments with the most occluded pixels (ties -> lower ID), fits a
// homography to each from its reliable (non-occluded, in-frame, valid)
// correspondences and overwrites every pixel of accepted regions with the
// homography flow. Each region draws from its own seed derived from
// (cfg.ransac.seed, segment ID), so results do not depend on `workers`.
RefineResult refine_regions(const FlowField& flow, const Segmentation& seg,
                            const OcclusionMap& occ, const RefineConfig& cfg);

}  // namespace samflow
