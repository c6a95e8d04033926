#include "samflow/augment.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "samflow/core.h"

namespace samflow {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (!(hi > lo)) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

void check_bound(double value, double bound, const char* what) {
  if (!std::isfinite(value) || value < 0.0 || value > bound + 1e-12) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string(what) + " must lie in [0, " +
                    std::to_string(bound) + "]");
  }
}

void check_config(const AugmentConfig& cfg) {
  check_bound(cfg.max_rotation, 0.1, "max_rotation");
  check_bound(cfg.max_scale_delta, 0.1, "max_scale_delta");
  check_bound(cfg.max_brightness, 0.1, "max_brightness");
  check_bound(cfg.max_contrast_delta, 0.1, "max_contrast_delta");
  if (!std::isfinite(cfg.max_translation) || cfg.max_translation < 0.0) {
    throw Error(ErrorKind::kInvalidArgument,
                "max_translation must be finite and non-negative");
  }
  if (cfg.max_motion < 0 || cfg.max_objects < 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "max_motion and max_objects must be non-negative");
  }
}

AugmentTransform draw_transform(std::mt19937_64& rng, int width, int height,
                                const AugmentConfig& cfg) {
  AffineParams p;
  p.tx = uniform(rng, -cfg.max_translation, cfg.max_translation);
  p.ty = uniform(rng, -cfg.max_translation, cfg.max_translation);
  p.rotation = uniform(rng, -cfg.max_rotation, cfg.max_rotation);
  p.scale = uniform(rng, 1.0 - cfg.max_scale_delta, 1.0 + cfg.max_scale_delta);
  Appearance a;
  a.brightness = uniform(rng, -cfg.max_brightness, cfg.max_brightness);
  a.contrast =
      uniform(rng, 1.0 - cfg.max_contrast_delta, 1.0 + cfg.max_contrast_delta);
  return AugmentTransform::affine(p, width, height, a);
}

// Copies a crop pixel into `dst`, converting between gray and RGB.
void put_pixel(Image& dst, int x, int y, const Image& src, int sx, int sy) {
  if (dst.channels() == src.channels()) {
    for (int c = 0; c < dst.channels(); ++c) dst.at(x, y, c) = src.at(sx, sy, c);
  } else if (dst.channels() == 1) {
    dst.at(x, y, 0) = src.gray(sx, sy);
  } else {
    for (int c = 0; c < dst.channels(); ++c) dst.at(x, y, c) = src.at(sx, sy, 0);
  }
}

BoolMap all_true(int width, int height) { return BoolMap(width, height, 1); }

}  // namespace

AugmentTransform AugmentTransform::affine(const AffineParams& params,
                                          int width, int height,
                                          Appearance appearance) {
  if (!std::isfinite(params.tx) || !std::isfinite(params.ty) ||
      !std::isfinite(params.rotation) || !std::isfinite(params.scale)) {
    throw Error(ErrorKind::kNonFinite, "affine parameters must be finite");
  }
  AugmentTransform t;
  t.kind = Kind::kAffine;
  t.params = params;
  t.appearance = appearance;
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double c = params.scale * std::cos(params.rotation);
  const double s = params.scale * std::sin(params.rotation);
  // q = R (p - centre) + centre + t
  t.matrix = {c, -s, cx - c * cx + s * cy + params.tx,
              s, c,  cy - s * cx - c * cy + params.ty};
  return t;
}

Vec2 AugmentTransform::apply(Vec2 p) const {
  const auto& m = matrix;
  return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
}

AugmentTransform AugmentTransform::inverse() const {
  const auto& m = matrix;
  const double det = m[0] * m[4] - m[1] * m[3];
  if (!std::isfinite(det) || std::abs(det) < 1e-12) {
    throw Error(ErrorKind::kSingular, "augmentation transform is not invertible");
  }
  AugmentTransform inv = *this;
  const double a = m[4] / det, b = -m[1] / det;
  const double c = -m[3] / det, d = m[0] / det;
  inv.matrix = {a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])};
  return inv;
}

std::pair<AugmentTransform, AugmentTransform> sample_transforms(
    std::uint64_t seed, int width, int height, const AugmentConfig& cfg) {
  check_config(cfg);
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "frame must be non-empty");
  }
  std::mt19937_64 rng(seed);
  AugmentTransform t1 = draw_transform(rng, width, height, cfg);
  AugmentTransform t2 = draw_transform(rng, width, height, cfg);
  return {t1, t2};
}

std::vector<PasteSpec> sample_paste_specs(std::uint64_t seed,
                                          std::span<const KeyObject> objects,
                                          int width, int height,
                                          const AugmentConfig& cfg) {
  check_config(cfg);
  std::mt19937_64 rng(seed);
  std::vector<PasteSpec> specs;
  const std::size_t n =
      std::min(objects.size(), static_cast<std::size_t>(cfg.max_objects));
  for (std::size_t k = 0; k < n; ++k) {
    const int w = objects[k].mask.width();
    const int h = objects[k].mask.height();
    PasteSpec s;
    s.dx = uniform_int(rng, -cfg.max_motion, cfg.max_motion);
    s.dy = uniform_int(rng, -cfg.max_motion, cfg.max_motion);
    // Frame 1 spans [x, x + w), frame 2 spans [x + dx, x + dx + w).
    const int x_lo = std::max(0, -s.dx);
    const int x_hi = width - w - std::max(0, s.dx);
    const int y_lo = std::max(0, -s.dy);
    const int y_hi = height - h - std::max(0, s.dy);
    if (x_hi < x_lo || y_hi < y_lo) {
      specs.push_back({-1, -1, 0, 0});  // placeholder, dropped below
      continue;
    }
    s.x = uniform_int(rng, x_lo, x_hi);
    s.y = uniform_int(rng, y_lo, y_hi);
    specs.push_back(s);
  }
  return specs;
}

AugmentedSample paste_objects(const Image& img1, const Image& img2,
                              const FlowField& flow,
                              std::span<const KeyObject> objects,
                              std::span<const PasteSpec> specs) {
  const int W = img1.width(), H = img1.height();
  require_same_dims(W, H, img2.width(), img2.height(), "paste frames");
  require_same_dims(W, H, flow.width(), flow.height(), "paste flow");
  if (img1.channels() != img2.channels()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "paste frames have different channel counts");
  }
  if (specs.size() > objects.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "more placements than key objects");
  }

  AugmentedSample out;
  out.img1 = img1;
  out.img2 = img2;
  out.flow_target = flow;
  out.flow_target.valid = {};
  out.valid = flow.has_valid_mask() ? flow.valid : all_true(W, H);
  out.occluded = BoolMap(W, H, 0);

  // Which object (or -1) is visible at each pixel of each frame.
  Plane<int> label1(W, H, -1);
  Plane<int> label2(W, H, -1);

  for (std::size_t k = 0; k < specs.size(); ++k) {
    const KeyObject& obj = objects[k];
    const PasteSpec& s = specs[k];
    const int w = obj.mask.width(), h = obj.mask.height();
    if (obj.image_crop.width() != w || obj.image_crop.height() != h) {
      throw Error(ErrorKind::kDimensionMismatch,
                  "key object crop and mask differ in size");
    }
    const bool in1 = s.x >= 0 && s.y >= 0 && s.x + w <= W && s.y + h <= H;
    const int x2 = s.x + s.dx, y2 = s.y + s.dy;
    const bool in2 = x2 >= 0 && y2 >= 0 && x2 + w <= W && y2 + h <= H;
    if (!in1 || !in2) {
      throw Error(ErrorKind::kInvalidArgument,
                  "key object " + std::to_string(k) +
                      " placement leaves the frame");
    }
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        if (!obj.mask(i, j)) continue;
        put_pixel(out.img1, s.x + i, s.y + j, obj.image_crop, i, j);
        out.flow_target.set(s.x + i, s.y + j,
                            {static_cast<double>(s.dx),
                             static_cast<double>(s.dy)});
        out.valid(s.x + i, s.y + j) = 1;
        label1(s.x + i, s.y + j) = static_cast<int>(k);
        put_pixel(out.img2, x2 + i, y2 + j, obj.image_crop, i, j);
        label2(x2 + i, y2 + j) = static_cast<int>(k);
      }
    }
  }

  // A frame-1 pixel is occluded when its match lands on a different pasted
  // object in frame 2.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int qx = static_cast<int>(std::lround(x + out.flow_target.u(x, y)));
      const int qy = static_cast<int>(std::lround(y + out.flow_target.v(x, y)));
      if (qx < 0 || qy < 0 || qx >= W || qy >= H) continue;
      const int l2 = label2(qx, qy);
      if (l2 >= 0 && l2 != label1(x, y)) out.occluded(x, y) = 1;
    }
  }
  return out;
}

AugmentedSample paste_objects(const Image& img1, const Image& img2,
                              const FlowField& flow,
                              std::span<const KeyObject> objects,
                              std::uint64_t seed, const AugmentConfig& cfg) {
  const std::vector<PasteSpec> drawn =
      sample_paste_specs(seed, objects, img1.width(), img1.height(), cfg);
  std::vector<KeyObject> kept;
  std::vector<PasteSpec> specs;
  for (std::size_t k = 0; k < drawn.size(); ++k) {
    if (drawn[k].x < 0) continue;
    kept.push_back(objects[k]);
    specs.push_back(drawn[k]);
  }
  return paste_objects(img1, img2, flow, kept, specs);
}

AugmentedSample apply_affine_pair(const AugmentedSample& sample,
                                  const AugmentTransform& t1,
                                  const AugmentTransform& t2) {
  const int W = sample.img1.width(), H = sample.img1.height();
  require_same_dims(W, H, sample.img2.width(), sample.img2.height(),
                    "augment frames");
  require_same_dims(W, H, sample.flow_target.width(),
                    sample.flow_target.height(), "augment flow");
  const AugmentTransform inv1 = t1.inverse();
  const AugmentTransform inv2 = t2.inverse();

  const auto transform_image = [&](const Image& src, const AugmentTransform& t,
                                   const AugmentTransform& inv) {
    Image out(W, H, src.channels());
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const Sample s = bilinear_sample(src, inv.apply({double(x), double(y)}));
        for (int c = 0; c < src.channels(); ++c) {
          const double v =
              t.appearance.contrast * s.values[c] + t.appearance.brightness;
          out.at(x, y, c) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    return out;
  };

  AugmentedSample out;
  out.img1 = transform_image(sample.img1, t1, inv1);
  out.img2 = transform_image(sample.img2, t2, inv2);
  out.flow_target = FlowField(W, H);
  out.valid = BoolMap(W, H, 0);
  out.occluded = BoolMap(W, H, 0);

  const bool has_valid = !sample.valid.empty();
  const bool has_occ = !sample.occluded.empty();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Vec2 q{double(x), double(y)};
      const Vec2 p = inv1.apply(q);
      bool oob = false;
      const double fu = bilinear_sample(sample.flow_target.u, p, &oob);
      const double fv = bilinear_sample(sample.flow_target.v, p);
      const Vec2 m = t2.apply({p.x + fu, p.y + fv});
      out.flow_target.set(x, y, {m.x - q.x, m.y - q.y});
      if (oob) continue;
      const int nx = std::clamp(static_cast<int>(std::lround(p.x)), 0, W - 1);
      const int ny = std::clamp(static_cast<int>(std::lround(p.y)), 0, H - 1);
      out.valid(x, y) = has_valid ? sample.valid(nx, ny) : 1;
      if (has_occ) out.occluded(x, y) = sample.occluded(nx, ny);
    }
  }
  return out;
}

LossValue self_supervision_loss(const FlowField& pred,
                                const AugmentedSample& target) {
  const int W = pred.width(), H = pred.height();
  require_same_dims(W, H, target.flow_target.width(),
                    target.flow_target.height(), "self-supervision flow");
  const bool has_valid = !target.valid.empty();
  if (has_valid) {
    require_same_dims(W, H, target.valid.width(), target.valid.height(),
                      "self-supervision valid mask");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (has_valid && !target.valid(x, y)) continue;
      sum += std::abs(pred.u(x, y) - target.flow_target.u(x, y)) +
             std::abs(pred.v(x, y) - target.flow_target.v(x, y));
      ++n;
    }
  }
  if (n == 0) return {0.0, true};
  return {sum / static_cast<double>(n), false};
}

}  // namespace samflow
