#include "samflow/core.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace samflow {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kSize: return "size";
    case ErrorKind::kConsistency: return "consistency";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kSingular: return "singular";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) {
    throw Error(ErrorKind::kInvalidArgument, "negative image dimensions");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorKind::kInvalidArgument,
                "image must have 1 or 3 channels, got " +
                    std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

double Image::gray(int x, int y) const {
  if (channels_ == 1) return at(x, y, 0);
  return (at(x, y, 0) + at(x, y, 1) + at(x, y, 2)) / 3.0;
}

void Image::validate() const {
  for (double value : data_) {
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kNonFinite, "image contains a non-finite value");
    }
    if (value < 0.0 || value > 1.0) {
      throw Error(ErrorKind::kInvalidArgument,
                  "image value outside [0, 1]: " + std::to_string(value));
    }
  }
}

void FlowField::validate() const {
  if (!u.same_dims(v)) {
    throw Error(ErrorKind::kDimensionMismatch, "flow u/v planes differ in size");
  }
  if (!valid.empty() && !valid.same_dims(u)) {
    throw Error(ErrorKind::kDimensionMismatch,
                "flow valid mask differs in size");
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(v[i])) {
      throw Error(ErrorKind::kNonFinite, "flow contains a non-finite value");
    }
  }
}

Segmentation Segmentation::uniform(int width, int height) {
  Segmentation seg;
  seg.ids = Plane<std::int32_t>(width, height, 0);
  seg.num_segments = 1;
  seg.background_id = 0;
  seg.source_mask = {kBackgroundSource};
  return seg;
}

void Segmentation::validate() const {
  for (std::int32_t id : ids.values()) {
    if (id < 0 || id >= num_segments) {
      throw Error(ErrorKind::kConsistency,
                  "segment ID " + std::to_string(id) + " outside [0, " +
                      std::to_string(num_segments) + ")");
    }
  }
}

void require_same_dims(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) {
    throw Error(ErrorKind::kDimensionMismatch,
                std::string(what) + ": " + std::to_string(w1) + "x" +
                    std::to_string(h1) + " vs " + std::to_string(w2) + "x" +
                    std::to_string(h2));
  }
}

namespace {

// Clamped integer corners and fractional weights for one bilinear lookup.
struct Stencil {
  int x0, x1, y0, y1;
  double fx, fy;
  bool out_of_bounds;
};

Stencil make_stencil(int width, int height, Vec2 pt) {
  const double max_x = width - 1;
  const double max_y = height - 1;
  Stencil s{};
  s.out_of_bounds = !(pt.x >= 0.0 && pt.x <= max_x && pt.y >= 0.0 &&
                      pt.y <= max_y);
  const double x = std::clamp(pt.x, 0.0, max_x);
  const double y = std::clamp(pt.y, 0.0, max_y);
  s.x0 = static_cast<int>(std::floor(x));
  s.y0 = static_cast<int>(std::floor(y));
  s.fx = x - s.x0;
  s.fy = y - s.y0;
  s.x1 = std::min(s.x0 + 1, width - 1);
  s.y1 = std::min(s.y0 + 1, height - 1);
  return s;
}

template <typename Lookup>
double interpolate(const Stencil& s, Lookup&& at) {
  const double top = (1.0 - s.fx) * at(s.x0, s.y0) + s.fx * at(s.x1, s.y0);
  const double bottom = (1.0 - s.fx) * at(s.x0, s.y1) + s.fx * at(s.x1, s.y1);
  return (1.0 - s.fy) * top + s.fy * bottom;
}

}  // namespace

Sample bilinear_sample(const Image& img, Vec2 pt) {
  if (img.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "bilinear_sample on empty image");
  }
  const Stencil s = make_stencil(img.width(), img.height(), pt);
  Sample out;
  out.channels = img.channels();
  out.out_of_bounds = s.out_of_bounds;
  for (int c = 0; c < img.channels(); ++c) {
    out.values[c] =
        interpolate(s, [&](int x, int y) { return img.at(x, y, c); });
  }
  return out;
}

double bilinear_sample(const Plane<double>& plane, Vec2 pt,
                       bool* out_of_bounds) {
  if (plane.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "bilinear_sample on empty plane");
  }
  const Stencil s = make_stencil(plane.width(), plane.height(), pt);
  if (out_of_bounds != nullptr) *out_of_bounds = s.out_of_bounds;
  return interpolate(s, [&](int x, int y) { return plane(x, y); });
}

Warped<Image> backward_warp(const Image& src, const FlowField& flow) {
  require_same_dims(src.width(), src.height(), flow.width(), flow.height(),
                    "backward_warp");
  Warped<Image> out{Image(src.width(), src.height(), src.channels()),
                    BoolMap(src.width(), src.height(), 0)};
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const Vec2 pt{x + flow.u(x, y), y + flow.v(x, y)};
      const Sample s = bilinear_sample(src, pt);
      for (int c = 0; c < src.channels(); ++c) {
        out.field.at(x, y, c) = s.values[c];
      }
      out.out_of_bounds(x, y) = s.out_of_bounds ? 1 : 0;
    }
  }
  return out;
}

Warped<FlowField> backward_warp(const FlowField& src, const FlowField& flow) {
  require_same_dims(src.width(), src.height(), flow.width(), flow.height(),
                    "backward_warp");
  Warped<FlowField> out{FlowField(src.width(), src.height()),
                        BoolMap(src.width(), src.height(), 0)};
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      const Vec2 pt{x + flow.u(x, y), y + flow.v(x, y)};
      bool oob = false;
      out.field.u(x, y) = bilinear_sample(src.u, pt, &oob);
      out.field.v(x, y) = bilinear_sample(src.v, pt);
      out.out_of_bounds(x, y) = oob ? 1 : 0;
    }
  }
  return out;
}

Segmentation downsample_segmentation(const Segmentation& seg, int factor) {
  if (factor <= 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "downsample factor must be positive");
  }
  if ((factor & (factor - 1)) != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "downsample factor must be a power of two");
  }
  const int width = (seg.width() + factor - 1) / factor;
  const int height = (seg.height() + factor - 1) / factor;
  Segmentation out;
  out.ids = Plane<std::int32_t>(width, height);
  out.num_segments = seg.num_segments;
  out.background_id = seg.background_id;
  out.source_mask = seg.source_mask;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      out.ids(x, y) = seg.ids(x * factor, y * factor);
    }
  }
  return out;
}

namespace {

Vec2 source_coord(int x, int y, double sx, double sy) {
  return {(x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5};
}

}  // namespace

Image resize_image(const Image& img, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "resize target must be positive");
  }
  if (img.width() == width && img.height() == height) return img;
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  Image out(width, height, img.channels());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Sample s = bilinear_sample(img, source_coord(x, y, sx, sy));
      for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = s.values[c];
    }
  }
  return out;
}

FlowField resize_flow(const FlowField& flow, int width, int height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "resize target must be positive");
  }
  if (flow.width() == width && flow.height() == height) return flow;
  const double sx = static_cast<double>(flow.width()) / width;
  const double sy = static_cast<double>(flow.height()) / height;
  FlowField out(width, height);
  if (flow.has_valid_mask()) out.valid = BoolMap(width, height, 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Vec2 src = source_coord(x, y, sx, sy);
      out.u(x, y) = bilinear_sample(flow.u, src) / sx;
      out.v(x, y) = bilinear_sample(flow.v, src) / sy;
      if (flow.has_valid_mask()) {
        const int nx = std::clamp(static_cast<int>(std::lround(src.x)), 0,
                                  flow.width() - 1);
        const int ny = std::clamp(static_cast<int>(std::lround(src.y)), 0,
                                  flow.height() - 1);
        out.valid(x, y) = flow.valid(nx, ny);
      }
    }
  }
  return out;
}

}  // namespace samflow
