#pragma once

#include <array>

#include "samflow/types.h"

namespace samflow {

// Per-channel bilinear sample. Coordinates outside [0, W-1] x [0, H-1] are
// clamped to the border and reported through `out_of_bounds`.
struct Sample {
  std::array<double, 3> values{};
  int channels = 0;
  bool out_of_bounds = false;
};

Sample bilinear_sample(const Image& img, Vec2 pt);
double bilinear_sample(const Plane<double>& plane, Vec2 pt,
                       bool* out_of_bounds = nullptr);

template <typename Field>
struct Warped {
  Field field;
  BoolMap out_of_bounds;
};

// output(p) = src(p + flow(p)), bilinear, border-clamped.
Warped<Image> backward_warp(const Image& src, const FlowField& flow);
// Warps the u/v planes of a flow field. The result carries no valid mask.
Warped<FlowField> backward_warp(const FlowField& src, const FlowField& flow);

// Nearest-neighbour subsampling: output (i, j) takes the ID at
// (i * factor, j * factor). Output dims are rounded up. Segment IDs keep
// their meaning, so a segment may end up with no pixels at coarse levels.
Segmentation downsample_segmentation(const Segmentation& seg, int factor);

// Bilinear resize with pixel-area alignment.
Image resize_image(const Image& img, int width, int height);
// Resizes and rescales displacement vectors to the new pixel units. A valid
// mask, if present, is resampled nearest-neighbour.
FlowField resize_flow(const FlowField& flow, int width, int height);

// Throws kDimensionMismatch with `what` in the message.
void require_same_dims(int w1, int h1, int w2, int h2, const char* what);

}  // namespace samflow
