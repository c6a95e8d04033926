#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "samflow/losses.h"
#include "samflow/masks.h"
#include "samflow/types.h"

namespace samflow {

struct AffineParams {
  double tx = 0.0;        // px
  double ty = 0.0;        // px
  double rotation = 0.0;  // rad, about the frame centre
  double scale = 1.0;     // about the frame centre
};

// I' = clamp(contrast * I + brightness, 0, 1).
struct Appearance {
  double brightness = 0.0;
  double contrast = 1.0;
};

// Integer placement of one key object: top-left corner in frame 1 and its
// translation between the frames.
struct PasteSpec {
  int x = 0;
  int y = 0;
  int dx = 0;
  int dy = 0;
};

struct AugmentTransform {
  enum class Kind { kAffine, kPaste };

  Kind kind = Kind::kAffine;
  AffineParams params;
  Appearance appearance;
  // Forward map q = A p + t as [a b tx; c d ty], frame-centred for kAffine.
  std::array<double, 6> matrix{1, 0, 0, 0, 1, 0};
  // kPaste only.
  int object = -1;
  PasteSpec paste;

  static AugmentTransform identity() { return {}; }
  // Builds the frame-centred matrix for `params` on a width x height frame.
  static AugmentTransform affine(const AffineParams& params, int width,
                                 int height, Appearance appearance = {});

  Vec2 apply(Vec2 p) const;
  // Throws kSingular when the linear part is not invertible.
  AugmentTransform inverse() const;
};

struct AugmentConfig {
  double max_translation = 10.0;  // px
  double max_rotation = 0.1;      // rad, must be <= 0.1
  double max_scale_delta = 0.1;   // scale in [1 - d, 1 + d], d <= 0.1
  double max_brightness = 0.1;    // additive, <= 0.1
  double max_contrast_delta = 0.1;
  int max_motion = 16;            // per-object translation in [-m, m]^2
  int max_objects = 3;
};

// Draws (T1, T2) uniformly inside the configured ranges; deterministic per
// seed. Throws kInvalidArgument when a range exceeds its allowed bound.
std::pair<AugmentTransform, AugmentTransform> sample_transforms(
    std::uint64_t seed, int width, int height, const AugmentConfig& cfg = {});

struct AugmentedSample {
  Image img1;
  Image img2;
  FlowField flow_target;
  BoolMap valid;     // where flow_target is defined
  BoolMap occluded;  // frame-1 pixels whose match is hidden by a pasted object
};

// Draws a motion and an in-frame placement for up to cfg.max_objects
// objects, skipping objects that cannot fit in both frames.
std::vector<PasteSpec> sample_paste_specs(std::uint64_t seed,
                                          std::span<const KeyObject> objects,
                                          int width, int height,
                                          const AugmentConfig& cfg = {});

// Pastes objects[k] at specs[k] in frame 1 and shifted by (dx, dy) in frame
// 2, later objects on top. Inside a pasted frame-1 mask the target flow is
// (dx, dy); elsewhere it is `flow`. Throws kInvalidArgument when a placement
// leaves either frame.
AugmentedSample paste_objects(const Image& img1, const Image& img2,
                              const FlowField& flow,
                              std::span<const KeyObject> objects,
                              std::span<const PasteSpec> specs);

// Seeded variant: placements and motions come from sample_paste_specs.
AugmentedSample paste_objects(const Image& img1, const Image& img2,
                              const FlowField& flow,
                              std::span<const KeyObject> objects,
                              std::uint64_t seed,
                              const AugmentConfig& cfg = {});

// I~_t = appearance_t(I_t o T_t^-1);
// F~'(q) = T2(p + F~(p)) - q with p = T1^-1(q), resampled bilinearly.
// valid drops pixels whose preimage leaves frame 1.
AugmentedSample apply_affine_pair(const AugmentedSample& sample,
                                  const AugmentTransform& t1,
                                  const AugmentTransform& t2);

// mean over valid pixels of |u - u~| + |v - v~|.
LossValue self_supervision_loss(const FlowField& pred,
                                const AugmentedSample& target);

}  // namespace samflow
