#pragma once

#include "samflow/report.h"
#include "samflow/types.h"

namespace samflow {

// Scalar loss with a flag for "nothing to average over" (value is then 0).
struct LossValue {
  double value = 0.0;
  bool empty = false;
};

// --- occlusion ----------------------------------------------------------------

struct OcclusionConfig {
  double alpha1 = 0.01;
  double alpha2 = 0.5;
};

// Forward-backward consistency: p is occluded when
//   |f(p) + b(p + f(p))|^2 > alpha1 (|f(p)|^2 + |b(p + f(p))|^2) + alpha2
// or when p + f(p) leaves the frame.
OcclusionMap occlusion_fb(const FlowField& flow_fwd, const FlowField& flow_bwd,
                          const OcclusionConfig& cfg = {});

// --- photometric ----------------------------------------------------------------

inline constexpr int kCensusRadius = 3;  // 7x7 window
// A neighbour counts as brighter only when it exceeds the centre by more
// than this, so ties in the channel mean do not depend on rounding.
inline constexpr double kCensusTieTolerance = 1e-9;

// Census distance per pixel on channel-averaged intensities: binary 7x7
// census signatures (neighbour > centre) compared with the soft Hamming term
// d^2 / (0.1 + d^2), averaged over the neighbours that are set in `valid`
// (all 48 when `valid` is empty). Zero within kCensusRadius of the border.
Plane<double> census_distance_map(const Image& a, const Image& b,
                                  const BoolMap& valid = {});

// Mean census distance over masked pixels at least kCensusRadius from the
// border; the mask also limits which neighbours enter each signature. An
// empty `mask` means all pixels.
LossValue census_loss(const Image& i1, const Image& i2_warped,
                      const BoolMap& mask = {});

struct PhotometricConfig {
  double w_l1 = 0.15;
  double w_ssim = 0.85;
  double w_census = 1.0;
  OcclusionConfig occlusion;
};

// Per-direction terms of the photometric loss.
struct PhotometricTerms {
  double l1 = 0.0;
  double ssim = 0.0;    // mean of (1 - SSIM) / 2
  double census = 0.0;
  std::size_t pixels = 0;
};

struct PhotometricResult {
  LossValue loss;
  PhotometricTerms forward;
  PhotometricTerms backward;
  OcclusionMap occ_fwd;
  OcclusionMap occ_bwd;
};

// Sum over both directions of
//   w_l1 * L1 + w_ssim * (1 - SSIM)/2 + w_census * census
// each averaged over non-occluded, in-frame pixels. SSIM uses 3x3 windows
// restricted to those pixels. `extra_occ_fwd`, if non-empty, is OR-ed into
// the forward occlusion estimate.
PhotometricResult photometric_loss(const Image& i1, const Image& i2,
                                   const FlowField& flow_fwd,
                                   const FlowField& flow_bwd,
                                   const PhotometricConfig& cfg = {},
                                   const BoolMap& extra_occ_fwd = {});

// --- smoothness -----------------------------------------------------------------

struct EdgeWeights {
  Plane<double> wx;
  Plane<double> wy;
};

inline constexpr double kDefaultEdgeLambda = 150.0;

// wx(p) = exp(-lambda * mean_c |I(p + ex) - I(p)|), likewise wy; 1 on the
// last column / row.
EdgeWeights edge_weights(const Image& img, double lambda = kDefaultEdgeLambda);
// wx(p) = 0 when the horizontal 3-tap stencil centred at p straddles a
// segment boundary (left or right neighbour has another ID), else 1.
// Likewise wy.
EdgeWeights edge_weights(const Segmentation& seg);

enum class Norm { kL1, kL2 };

// Second-order smoothness:
//   mean over x-interior p of wx(p) * ||F(p-ex) - 2F(p) + F(p+ex)||
// + mean over y-interior p of wy(p) * ||F(p-ey) - 2F(p) + F(p+ey)||
// L1: |du| + |dv|. L2: du^2 + dv^2. An axis with no interior pixels adds 0.
double smoothness_2nd(const FlowField& flow, const EdgeWeights& w, Norm norm);

// Gradient of smoothness_2nd with respect to every (u, v). L1 uses
// sign(0) = 0.
FlowField grad_smoothness_2nd(const FlowField& flow, const EdgeWeights& w,
                              Norm norm);

enum class HgNormalization { kRegionPixels, kFramePixels };

// mean over region pixels of |u - u_ref| + |v - v_ref|; 0 for an empty
// region. kFramePixels divides by the frame area instead.
double homography_smoothness(
    const FlowField& flow, const FlowField& refined, const BoolMap& region,
    HgNormalization normalization = HgNormalization::kRegionPixels);

// sign(F - F_ref) / N on region pixels, 0 elsewhere. `refined` is treated
// as a constant.
FlowField grad_homography_smoothness(
    const FlowField& flow, const FlowField& refined, const BoolMap& region,
    HgNormalization normalization = HgNormalization::kRegionPixels);

// --- total ----------------------------------------------------------------------

inline constexpr double kDefaultAugWeight = 0.1;
inline constexpr double kDefaultHgWeight = 0.1;

struct LossReport {
  double ph = 0.0;
  double aug = 0.0;
  double hg = 0.0;
  double w_aug = kDefaultAugWeight;
  double w_hg = kDefaultHgWeight;
  double total = 0.0;
};

// total = ph + w_aug * aug + w_hg * hg. Throws kNonFinite on any
// non-finite input.
LossReport total_loss(double ph, double aug, double hg,
                      double w_aug = kDefaultAugWeight,
                      double w_hg = kDefaultHgWeight);

// Fields: ph, aug, hg, w_aug, w_hg, total.
Report to_report(const LossReport& report);

}  // namespace samflow
