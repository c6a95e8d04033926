#include "samflow/analysis.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "samflow/core.h"
#include "samflow/io.h"

namespace samflow {

namespace {

struct Accum {
  double epe_sum = 0.0;
  std::size_t outliers = 0;
  std::size_t n = 0;

  void add(double du, double dv, const Vec2& g) {
    const double e = std::sqrt(du * du + dv * dv);
    epe_sum += e;
    const double mag = std::sqrt(g.x * g.x + g.y * g.y);
    if (e > kFlAbsThreshold && e > kFlRelThreshold * mag) ++outliers;
    ++n;
  }
  double epe() const { return epe_sum / static_cast<double>(n); }
  double fl() const {
    return 100.0 * static_cast<double>(outliers) / static_cast<double>(n);
  }
};

void check_pair(const FlowField& est, const FlowField& gt, const BoolMap& mask,
                const char* what) {
  require_same_dims(est.width(), est.height(), gt.width(), gt.height(), what);
  if (!mask.empty()) {
    require_same_dims(est.width(), est.height(), mask.width(), mask.height(),
                      what);
  }
}

Accum accumulate(const FlowField& est, const FlowField& gt, const BoolMap& mask) {
  Accum a;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!mask.empty() && !mask(x, y)) continue;
      if (!gt.is_valid(x, y)) continue;
      a.add(est.u(x, y) - gt.u(x, y), est.v(x, y) - gt.v(x, y), gt.at(x, y));
    }
  }
  if (a.n == 0) {
    throw Error(ErrorKind::kInvalidArgument, "empty evaluation set");
  }
  return a;
}

}  // namespace

double epe(const FlowField& est, const FlowField& gt, const BoolMap& mask) {
  check_pair(est, gt, mask, "epe");
  return accumulate(est, gt, mask).epe();
}

double fl_rate(const FlowField& est, const FlowField& gt, const BoolMap& mask) {
  check_pair(est, gt, mask, "fl_rate");
  return accumulate(est, gt, mask).fl();
}

MetricsReport metrics_with_splits(const FlowField& est, const FlowField& gt,
                                  const BoolMap& occluded, const BoolMap& fg) {
  check_pair(est, gt, occluded, "metrics");
  check_pair(est, gt, fg, "metrics");
  // 0 all, 1 noc, 2 occ, 3 bg, 4 fg
  Accum acc[5];
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.is_valid(x, y)) continue;
      const double du = est.u(x, y) - gt.u(x, y);
      const double dv = est.v(x, y) - gt.v(x, y);
      const Vec2 g = gt.at(x, y);
      const bool occ = !occluded.empty() && occluded(x, y);
      acc[0].add(du, dv, g);
      acc[occ ? 2 : 1].add(du, dv, g);
      if (!fg.empty()) acc[fg(x, y) ? 4 : 3].add(du, dv, g);
    }
  }
  MetricsReport m;
  m.n_all = acc[0].n;
  m.n_noc = acc[1].n;
  m.n_occ = acc[2].n;
  m.n_bg = acc[3].n;
  m.n_fg = acc[4].n;
  const auto fill = [&](const Accum& a, std::optional<double>& e,
                        std::optional<double>& f, const char* name) {
    if (a.n == 0) {
      m.notes.push_back(std::string(name) + ": no evaluated pixels");
      return;
    }
    e = a.epe();
    f = a.fl();
  };
  fill(acc[0], m.epe_all, m.fl_all, "all");
  fill(acc[1], m.epe_noc, m.fl_noc, "noc");
  fill(acc[2], m.epe_occ, m.fl_occ, "occ");
  if (!fg.empty()) {
    fill(acc[3], m.epe_bg, m.fl_bg, "bg");
    fill(acc[4], m.epe_fg, m.fl_fg, "fg");
  }
  return m;
}

Report to_report(const MetricsReport& m) {
  Report r;
  const auto opt = [&](const char* name, const std::optional<double>& v) {
    if (v) r.add(name, *v);
  };
  opt("epe_all", m.epe_all);
  opt("epe_noc", m.epe_noc);
  opt("epe_occ", m.epe_occ);
  opt("epe_bg", m.epe_bg);
  opt("epe_fg", m.epe_fg);
  opt("fl_all", m.fl_all);
  opt("fl_noc", m.fl_noc);
  opt("fl_occ", m.fl_occ);
  opt("fl_bg", m.fl_bg);
  opt("fl_fg", m.fl_fg);
  r.add("n_all", static_cast<double>(m.n_all));
  r.add("n_noc", static_cast<double>(m.n_noc));
  r.add("n_occ", static_cast<double>(m.n_occ));
  if (m.epe_bg || m.epe_fg || m.n_bg + m.n_fg > 0) {
    r.add("n_bg", static_cast<double>(m.n_bg));
    r.add("n_fg", static_cast<double>(m.n_fg));
  }
  return r;
}

FlowField translate_flow_x(const FlowField& flow, double shift) {
  if (!std::isfinite(shift)) {
    throw Error(ErrorKind::kNonFinite, "shift must be finite");
  }
  FlowField out(flow.width(), flow.height());
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const Vec2 src{x - shift, static_cast<double>(y)};
      out.u(x, y) = bilinear_sample(flow.u, src);
      out.v(x, y) = bilinear_sample(flow.v, src);
    }
  }
  return out;
}

LandscapeCurve landscape_sweep(const FlowField& flow, const Segmentation& seg,
                               const LandscapeConfig& cfg) {
  if (!(cfg.step > 0.0) || !std::isfinite(cfg.step) || !(cfg.range >= 0.0) ||
      !std::isfinite(cfg.range)) {
    throw Error(ErrorKind::kInvalidArgument,
                "landscape needs step > 0 and a finite range >= 0");
  }
  require_same_dims(flow.width(), flow.height(), seg.width(), seg.height(),
                    "landscape");
  const EdgeWeights w = edge_weights(seg);
  const long kmax = static_cast<long>(std::floor(cfg.range / cfg.step + 1e-9));
  if (kmax > 100000) {
    throw Error(ErrorKind::kInvalidArgument, "landscape sweep too long");
  }
  LandscapeCurve curve;
  for (long k = -kmax; k <= kmax; ++k) {
    curve.shifts.push_back(static_cast<double>(k) * cfg.step);
  }
  curve.losses.assign(curve.shifts.size(), 0.0);

  const auto eval = [&](std::size_t i) {
    curve.losses[i] =
        smoothness_2nd(translate_flow_x(flow, curve.shifts[i]), w, cfg.norm);
  };
  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < curve.shifts.size(); ++i) eval(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < curve.shifts.size(); i = next++) eval(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.losses.size(); ++i) {
    if (curve.losses[i] < curve.losses[best]) best = i;
  }
  curve.argmin_shift = curve.shifts[best];
  return curve;
}

std::string format_curve_csv(const LandscapeCurve& curve) {
  std::string out = "shift,loss\n";
  for (std::size_t i = 0; i < curve.shifts.size(); ++i) {
    out += format_real(curve.shifts[i]) + "," + format_real(curve.losses[i]) + "\n";
  }
  return out;
}

void write_curve_csv(const std::filesystem::path& path,
                     const LandscapeCurve& curve) {
  write_text_file(path, format_curve_csv(curve));
}

GradientMap gradient_field_map(const FlowField& flow, const Segmentation& seg,
                               const OcclusionMap& occ, GradientLoss loss,
                               const GradientMapConfig& cfg) {
  require_same_dims(flow.width(), flow.height(), seg.width(), seg.height(),
                    "gradient map segmentation");
  GradientMap out;
  if (loss == GradientLoss::kTraditional) {
    const EdgeWeights w = cfg.edge ? *cfg.edge : edge_weights(seg);
    out.raw = grad_smoothness_2nd(flow, w, cfg.norm);
  } else {
    const RefineResult refined = refine_regions(flow, seg, occ, cfg.refine);
    out.region = refined.region_mask;
    out.raw = grad_homography_smoothness(flow, refined.refined,
                                         refined.region_mask,
                                         cfg.hg_normalization);
  }

  const int W = flow.width(), H = flow.height();
  out.magnitude = Plane<double>(W, H, 0.0);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double m = std::hypot(out.raw.u(x, y), out.raw.v(x, y));
      out.magnitude(x, y) = m;
      if (first || m < lo) lo = m;
      if (first || m > hi) hi = m;
      first = false;
    }
  }
  const double span = hi - lo;
  for (double& m : out.magnitude.values()) m = span > 0.0 ? (m - lo) / span : 0.0;
  return out;
}

std::size_t gradient_support(const Plane<double>& magnitude,
                             const BoolMap& region) {
  if (!region.empty()) {
    require_same_dims(magnitude.width(), magnitude.height(), region.width(),
                      region.height(), "gradient support");
  }
  std::size_t n = 0;
  for (std::size_t i = 0; i < magnitude.size(); ++i) {
    if (!region.empty() && !region[i]) continue;
    if (std::lround(magnitude[i] * 255.0) > 0) ++n;
  }
  return n;
}

}  // namespace samflow
