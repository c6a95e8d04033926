#include "samflow/losses.h"

#include <algorithm>
#include <cmath>

#include "samflow/core.h"

namespace samflow {
namespace {

Plane<double> gray_plane(const Image& img) {
  Plane<double> g(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) g(x, y) = img.gray(x, y);
  }
  return g;
}

bool mask_at(const BoolMap& mask, int x, int y) {
  return mask.empty() || mask(x, y) != 0;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

// --- occlusion ----------------------------------------------------------------

OcclusionMap occlusion_fb(const FlowField& flow_fwd, const FlowField& flow_bwd,
                          const OcclusionConfig& cfg) {
  require_same_dims(flow_fwd.width(), flow_fwd.height(), flow_bwd.width(),
                    flow_bwd.height(), "occlusion_fb");
  const Warped<FlowField> bw = backward_warp(flow_bwd, flow_fwd);
  OcclusionMap occ{BoolMap(flow_fwd.width(), flow_fwd.height(), 0)};
  for (int y = 0; y < flow_fwd.height(); ++y) {
    for (int x = 0; x < flow_fwd.width(); ++x) {
      if (bw.out_of_bounds(x, y)) {
        occ.occluded(x, y) = 1;
        continue;
      }
      const double fu = flow_fwd.u(x, y), fv = flow_fwd.v(x, y);
      const double bu = bw.field.u(x, y), bv = bw.field.v(x, y);
      const double du = fu + bu, dv = fv + bv;
      const double lhs = du * du + dv * dv;
      const double rhs =
          cfg.alpha1 * (fu * fu + fv * fv + bu * bu + bv * bv) + cfg.alpha2;
      occ.occluded(x, y) = lhs > rhs ? 1 : 0;
    }
  }
  return occ;
}

// --- census -------------------------------------------------------------------

Plane<double> census_distance_map(const Image& a, const Image& b,
                                  const BoolMap& valid) {
  require_same_dims(a.width(), a.height(), b.width(), b.height(),
                    "census_distance_map");
  if (!valid.empty()) {
    require_same_dims(valid.width(), valid.height(), a.width(), a.height(),
                      "census_distance_map mask");
  }
  const Plane<double> ga = gray_plane(a);
  const Plane<double> gb = gray_plane(b);
  const int r = kCensusRadius;
  constexpr double kDiffering = 1.0 / (0.1 + 1.0);
  Plane<double> out(a.width(), a.height(), 0.0);
  for (int y = r; y < a.height() - r; ++y) {
    for (int x = r; x < a.width() - r; ++x) {
      const double ca = ga(x, y);
      const double cb = gb(x, y);
      int differing = 0;
      int bits = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (!mask_at(valid, x + dx, y + dy)) continue;
          ++bits;
          const bool bit_a = ga(x + dx, y + dy) - ca > kCensusTieTolerance;
          const bool bit_b = gb(x + dx, y + dy) - cb > kCensusTieTolerance;
          differing += bit_a != bit_b ? 1 : 0;
        }
      }
      out(x, y) = bits > 0 ? differing * kDiffering / bits : 0.0;
    }
  }
  return out;
}

LossValue census_loss(const Image& i1, const Image& i2_warped,
                      const BoolMap& mask) {
  const Plane<double> dist = census_distance_map(i1, i2_warped, mask);
  const int r = kCensusRadius;
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = r; y < i1.height() - r; ++y) {
    for (int x = r; x < i1.width() - r; ++x) {
      if (!mask_at(mask, x, y)) continue;
      sum += dist(x, y);
      ++n;
    }
  }
  if (n == 0) return {0.0, true};
  return {sum / static_cast<double>(n), false};
}

// --- photometric ------------------------------------------------------------------

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Mean over channels of (1 - SSIM) / 2 with 3x3 statistics restricted to
// pixels where `valid` is set.
double ssim_term(const Image& a, const Image& b, const BoolMap& valid, int x,
                 int y) {
  double acc = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    int n = 0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int qx = x + dx, qy = y + dy;
        if (qx < 0 || qy < 0 || qx >= a.width() || qy >= a.height()) continue;
        if (!valid(qx, qy)) continue;
        const double va = a.at(qx, qy, c), vb = b.at(qx, qy, c);
        sa += va;
        sb += vb;
        saa += va * va;
        sbb += vb * vb;
        sab += va * vb;
        ++n;
      }
    }
    const double mu_a = sa / n, mu_b = sb / n;
    const double var_a = std::max(0.0, saa / n - mu_a * mu_a);
    const double var_b = std::max(0.0, sbb / n - mu_b * mu_b);
    const double cov = sab / n - mu_a * mu_b;
    const double ssim = ((2 * mu_a * mu_b + kSsimC1) * (2 * cov + kSsimC2)) /
                        ((mu_a * mu_a + mu_b * mu_b + kSsimC1) *
                         (var_a + var_b + kSsimC2));
    acc += std::clamp((1.0 - ssim) / 2.0, 0.0, 1.0);
  }
  return acc / a.channels();
}

PhotometricTerms direction_terms(const Image& target, const Image& warped,
                                 const BoolMap& valid) {
  PhotometricTerms t;
  double l1 = 0.0, ssim = 0.0;
  for (int y = 0; y < target.height(); ++y) {
    for (int x = 0; x < target.width(); ++x) {
      if (!valid(x, y)) continue;
      double d = 0.0;
      for (int c = 0; c < target.channels(); ++c) {
        d += std::abs(target.at(x, y, c) - warped.at(x, y, c));
      }
      l1 += d / target.channels();
      ssim += ssim_term(target, warped, valid, x, y);
      ++t.pixels;
    }
  }
  if (t.pixels == 0) return t;
  t.l1 = l1 / static_cast<double>(t.pixels);
  t.ssim = ssim / static_cast<double>(t.pixels);
  t.census = census_loss(target, warped, valid).value;
  return t;
}

double combine(const PhotometricTerms& t, const PhotometricConfig& cfg) {
  return cfg.w_l1 * t.l1 + cfg.w_ssim * t.ssim + cfg.w_census * t.census;
}

}  // namespace

PhotometricResult photometric_loss(const Image& i1, const Image& i2,
                                   const FlowField& flow_fwd,
                                   const FlowField& flow_bwd,
                                   const PhotometricConfig& cfg,
                                   const BoolMap& extra_occ_fwd) {
  require_same_dims(i1.width(), i1.height(), i2.width(), i2.height(),
                    "photometric_loss images");
  if (i1.channels() != i2.channels()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "photometric_loss: channel counts differ");
  }
  require_same_dims(i1.width(), i1.height(), flow_fwd.width(),
                    flow_fwd.height(), "photometric_loss forward flow");
  require_same_dims(i1.width(), i1.height(), flow_bwd.width(),
                    flow_bwd.height(), "photometric_loss backward flow");

  PhotometricResult r;
  r.occ_fwd = occlusion_fb(flow_fwd, flow_bwd, cfg.occlusion);
  r.occ_bwd = occlusion_fb(flow_bwd, flow_fwd, cfg.occlusion);
  if (!extra_occ_fwd.empty()) {
    require_same_dims(extra_occ_fwd.width(), extra_occ_fwd.height(),
                      i1.width(), i1.height(), "photometric_loss extra occlusion");
    for (std::size_t i = 0; i < extra_occ_fwd.size(); ++i) {
      if (extra_occ_fwd[i]) r.occ_fwd.occluded[i] = 1;
    }
  }

  const Warped<Image> i2w = backward_warp(i2, flow_fwd);
  const Warped<Image> i1w = backward_warp(i1, flow_bwd);
  BoolMap valid_fwd(i1.width(), i1.height(), 0);
  BoolMap valid_bwd(i1.width(), i1.height(), 0);
  for (std::size_t i = 0; i < valid_fwd.size(); ++i) {
    valid_fwd[i] = !r.occ_fwd.occluded[i] && !i2w.out_of_bounds[i];
    valid_bwd[i] = !r.occ_bwd.occluded[i] && !i1w.out_of_bounds[i];
  }
  r.forward = direction_terms(i1, i2w.field, valid_fwd);
  r.backward = direction_terms(i2, i1w.field, valid_bwd);
  r.loss.empty = r.forward.pixels == 0 && r.backward.pixels == 0;
  r.loss.value = combine(r.forward, cfg) + combine(r.backward, cfg);
  return r;
}

// --- edge weights ---------------------------------------------------------------------

EdgeWeights edge_weights(const Image& img, double lambda) {
  const int w = img.width(), h = img.height();
  EdgeWeights out{Plane<double>(w, h, 1.0), Plane<double>(w, h, 1.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) {
        double d = 0.0;
        for (int c = 0; c < img.channels(); ++c) {
          d += std::abs(img.at(x + 1, y, c) - img.at(x, y, c));
        }
        out.wx(x, y) = std::exp(-lambda * d / img.channels());
      }
      if (y + 1 < h) {
        double d = 0.0;
        for (int c = 0; c < img.channels(); ++c) {
          d += std::abs(img.at(x, y + 1, c) - img.at(x, y, c));
        }
        out.wy(x, y) = std::exp(-lambda * d / img.channels());
      }
    }
  }
  return out;
}

EdgeWeights edge_weights(const Segmentation& seg) {
  const int w = seg.width(), h = seg.height();
  EdgeWeights out{Plane<double>(w, h, 1.0), Plane<double>(w, h, 1.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::int32_t id = seg.ids(x, y);
      const bool cross_x = (x > 0 && seg.ids(x - 1, y) != id) ||
                           (x + 1 < w && seg.ids(x + 1, y) != id);
      const bool cross_y = (y > 0 && seg.ids(x, y - 1) != id) ||
                           (y + 1 < h && seg.ids(x, y + 1) != id);
      if (cross_x) out.wx(x, y) = 0.0;
      if (cross_y) out.wy(x, y) = 0.0;
    }
  }
  return out;
}

// --- smoothness -----------------------------------------------------------------------

namespace {

void check_weights(const FlowField& flow, const EdgeWeights& w) {
  require_same_dims(flow.width(), flow.height(), w.wx.width(), w.wx.height(),
                    "smoothness weights");
  require_same_dims(flow.width(), flow.height(), w.wy.width(), w.wy.height(),
                    "smoothness weights");
}

double penalty(double du, double dv, Norm norm) {
  return norm == Norm::kL1 ? std::abs(du) + std::abs(dv) : du * du + dv * dv;
}

double penalty_slope(double d, Norm norm) {
  return norm == Norm::kL1 ? sign(d) : 2.0 * d;
}

// Visits every second-difference stencil along one axis.
template <typename Visit>
void for_each_stencil(const FlowField& flow, int ax, int ay, Visit&& visit) {
  const int w = flow.width(), h = flow.height();
  for (int y = ay; y < h - ay; ++y) {
    for (int x = ax; x < w - ax; ++x) {
      const double du =
          flow.u(x - ax, y - ay) - 2.0 * flow.u(x, y) + flow.u(x + ax, y + ay);
      const double dv =
          flow.v(x - ax, y - ay) - 2.0 * flow.v(x, y) + flow.v(x + ax, y + ay);
      visit(x, y, du, dv);
    }
  }
}

double interior_count(int along, int across) {
  return along >= 3 ? static_cast<double>(along - 2) * across : 0.0;
}

}  // namespace

double smoothness_2nd(const FlowField& flow, const EdgeWeights& w, Norm norm) {
  check_weights(flow, w);
  const double nx = interior_count(flow.width(), flow.height());
  const double ny = interior_count(flow.height(), flow.width());
  double sx = 0.0, sy = 0.0;
  if (nx > 0) {
    for_each_stencil(flow, 1, 0, [&](int x, int y, double du, double dv) {
      sx += w.wx(x, y) * penalty(du, dv, norm);
    });
  }
  if (ny > 0) {
    for_each_stencil(flow, 0, 1, [&](int x, int y, double du, double dv) {
      sy += w.wy(x, y) * penalty(du, dv, norm);
    });
  }
  return (nx > 0 ? sx / nx : 0.0) + (ny > 0 ? sy / ny : 0.0);
}

FlowField grad_smoothness_2nd(const FlowField& flow, const EdgeWeights& w,
                              Norm norm) {
  check_weights(flow, w);
  FlowField g(flow.width(), flow.height());
  auto accumulate = [&](int ax, int ay, const Plane<double>& weight, double n) {
    if (n <= 0) return;
    for_each_stencil(flow, ax, ay, [&](int x, int y, double du, double dv) {
      const double k = weight(x, y) / n;
      if (k == 0.0) return;
      const double gu = k * penalty_slope(du, norm);
      const double gv = k * penalty_slope(dv, norm);
      g.u(x - ax, y - ay) += gu;
      g.v(x - ax, y - ay) += gv;
      g.u(x, y) -= 2.0 * gu;
      g.v(x, y) -= 2.0 * gv;
      g.u(x + ax, y + ay) += gu;
      g.v(x + ax, y + ay) += gv;
    });
  };
  accumulate(1, 0, w.wx, interior_count(flow.width(), flow.height()));
  accumulate(0, 1, w.wy, interior_count(flow.height(), flow.width()));
  return g;
}

namespace {

double hg_denominator(const FlowField& flow, const BoolMap& region,
                      HgNormalization normalization) {
  if (normalization == HgNormalization::kFramePixels) {
    return static_cast<double>(flow.u.size());
  }
  double n = 0.0;
  for (std::uint8_t b : region.values()) n += b != 0 ? 1.0 : 0.0;
  return n;
}

void check_hg_inputs(const FlowField& flow, const FlowField& refined,
                     const BoolMap& region) {
  require_same_dims(flow.width(), flow.height(), refined.width(),
                    refined.height(), "homography_smoothness refined flow");
  require_same_dims(flow.width(), flow.height(), region.width(),
                    region.height(), "homography_smoothness region");
}

}  // namespace

double homography_smoothness(const FlowField& flow, const FlowField& refined,
                             const BoolMap& region,
                             HgNormalization normalization) {
  check_hg_inputs(flow, refined, region);
  const double n = hg_denominator(flow, region, normalization);
  double sum = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    any = true;
    sum += std::abs(flow.u[i] - refined.u[i]) + std::abs(flow.v[i] - refined.v[i]);
  }
  return any ? sum / n : 0.0;
}

FlowField grad_homography_smoothness(const FlowField& flow,
                                     const FlowField& refined,
                                     const BoolMap& region,
                                     HgNormalization normalization) {
  check_hg_inputs(flow, refined, region);
  const double n = hg_denominator(flow, region, normalization);
  FlowField g(flow.width(), flow.height());
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    g.u[i] = sign(flow.u[i] - refined.u[i]) / n;
    g.v[i] = sign(flow.v[i] - refined.v[i]) / n;
  }
  return g;
}

// --- total ------------------------------------------------------------------------------

LossReport total_loss(double ph, double aug, double hg, double w_aug,
                      double w_hg) {
  for (double v : {ph, aug, hg, w_aug, w_hg}) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kNonFinite, "total_loss input is not finite");
    }
  }
  LossReport r;
  r.ph = ph;
  r.aug = aug;
  r.hg = hg;
  r.w_aug = w_aug;
  r.w_hg = w_hg;
  r.total = ph + w_aug * aug + w_hg * hg;
  return r;
}

Report to_report(const LossReport& report) {
  Report r;
  r.add("ph", report.ph);
  r.add("aug", report.aug);
  r.add("hg", report.hg);
  r.add("w_aug", report.w_aug);
  r.add("w_hg", report.w_hg);
  r.add("total", report.total);
  return r;
}

}  // namespace samflow
