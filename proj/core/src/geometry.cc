#include "samflow/geometry.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "samflow/core.h"

namespace samflow {
namespace {

constexpr double kCollinearEps = 1e-9;
constexpr double kDeterminantEps = 1e-12;

Eigen::Matrix3d to_eigen(const std::array<double, 9>& m) {
  Eigen::Matrix3d out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out(r, c) = m[r * 3 + c];
  }
  return out;
}

std::array<double, 9> from_eigen(const Eigen::Matrix3d& m) {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 3 + c] = m(r, c);
  }
  return out;
}

double det3(const std::array<double, 9>& m) {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

// Similarity that moves the centroid to the origin and scales the mean
// distance to sqrt(2).
struct Conditioning {
  double scale = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Vec2 apply(Vec2 p) const { return {scale * (p.x - cx), scale * (p.y - cy)}; }
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d t;
    t << scale, 0, -scale * cx, 0, scale, -scale * cy, 0, 0, 1;
    return t;
  }
  Eigen::Matrix3d inverse() const {
    Eigen::Matrix3d t;
    t << 1 / scale, 0, cx, 0, 1 / scale, cy, 0, 0, 1;
    return t;
  }
};

Conditioning condition(std::span<const Vec2> pts) {
  Conditioning c;
  for (const Vec2& p : pts) {
    c.cx += p.x;
    c.cy += p.y;
  }
  c.cx /= static_cast<double>(pts.size());
  c.cy /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const Vec2& p : pts) mean_dist += std::hypot(p.x - c.cx, p.y - c.cy);
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0) || !std::isfinite(mean_dist)) {
    throw Error(ErrorKind::kDegenerate, "coincident correspondences");
  }
  c.scale = std::sqrt(2.0) / mean_dist;
  return c;
}

double cross(Vec2 a, Vec2 b, Vec2 c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

bool has_collinear_triple(const std::array<Vec2, 4>& p) {
  return std::abs(cross(p[0], p[1], p[2])) < kCollinearEps ||
         std::abs(cross(p[0], p[1], p[3])) < kCollinearEps ||
         std::abs(cross(p[0], p[2], p[3])) < kCollinearEps ||
         std::abs(cross(p[1], p[2], p[3])) < kCollinearEps;
}

// True when all normalized points lie (nearly) on one line.
bool all_collinear(std::span<const Vec2> normalized) {
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const Vec2& p : normalized) {
    sxx += p.x * p.x;
    sxy += p.x * p.y;
    syy += p.y * p.y;
  }
  const double n = static_cast<double>(normalized.size());
  sxx /= n;
  sxy /= n;
  syy /= n;
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  return tr / 2 - disc < kCollinearEps;
}

// Inline projection used by the RANSAC scoring loop.
inline bool project_raw(const std::array<double, 9>& m, const Vec2& p,
                        Vec2& out) {
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  if (std::abs(w) < Homography::kSingularDenominator) return false;
  out.x = (m[0] * p.x + m[1] * p.y + m[2]) / w;
  out.y = (m[3] * p.x + m[4] * p.y + m[5]) / w;
  return true;
}

int count_inliers(const Homography& h, std::span<const Vec2> src,
                  std::span<const Vec2> dst, double thresh,
                  std::vector<std::uint8_t>* mask) {
  const auto& m = h.matrix();
  const double thresh2 = thresh * thresh;
  int count = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    Vec2 q;
    bool in = false;
    if (project_raw(m, src[i], q)) {
      const double dx = q.x - dst[i].x;
      const double dy = q.y - dst[i].y;
      in = dx * dx + dy * dy <= thresh2;
    }
    if (mask != nullptr) (*mask)[i] = in ? 1 : 0;
    count += in ? 1 : 0;
  }
  return count;
}

int adaptive_iterations(double inlier_fraction, double confidence, int cap) {
  if (confidence >= 1.0) return cap;
  if (inlier_fraction >= 1.0) return 1;
  const double all_in = std::pow(inlier_fraction, 4);
  if (all_in <= 0.0) return cap;
  const double n = std::log(1.0 - confidence) / std::log1p(-all_in);
  if (!std::isfinite(n) || n >= cap) return cap;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Homography::Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
  for (double v : m_) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kDegenerate, "homography has non-finite entries");
    }
  }
  if (std::abs(m_[8]) > 1e-8) {
    const double s = m_[8];
    for (double& v : m_) v /= s;
  } else {
    double norm = 0.0;
    for (double v : m_) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorKind::kDegenerate, "zero homography");
    for (double& v : m_) v /= norm;
  }
  if (std::abs(det3(m_)) < kDeterminantEps) {
    throw Error(ErrorKind::kDegenerate, "singular homography");
  }
}

Homography Homography::translation(double dx, double dy) {
  return Homography({1, 0, dx, 0, 1, dy, 0, 0, 1});
}

double Homography::determinant() const { return det3(m_); }

std::optional<Vec2> Homography::try_project(Vec2 p) const {
  Vec2 q;
  if (!project_raw(m_, p, q)) return std::nullopt;
  return q;
}

Vec2 Homography::project(Vec2 p) const {
  Vec2 q;
  if (!project_raw(m_, p, q)) {
    throw Error(ErrorKind::kSingular, "point maps to infinity");
  }
  return q;
}

Homography Homography::inverse() const {
  return Homography(from_eigen(to_eigen(m_).inverse()));
}

double reprojection_error(const Homography& h, Vec2 src, Vec2 dst) {
  const auto q = h.try_project(src);
  if (!q) return std::numeric_limits<double>::infinity();
  return std::hypot(q->x - dst.x, q->y - dst.y);
}

Homography estimate_homography_dlt(std::span<const Vec2> src,
                                   std::span<const Vec2> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "DLT needs the same number of source and target points");
  }
  if (src.size() < 4) {
    throw Error(ErrorKind::kInvalidArgument, "DLT needs at least 4 points");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i].x) || !std::isfinite(src[i].y) ||
        !std::isfinite(dst[i].x) || !std::isfinite(dst[i].y)) {
      throw Error(ErrorKind::kNonFinite, "DLT input is not finite");
    }
  }

  const Conditioning cs = condition(src);
  const Conditioning cd = condition(dst);
  const std::size_t n = src.size();
  std::vector<Vec2> ns(n), nd(n);
  for (std::size_t i = 0; i < n; ++i) {
    ns[i] = cs.apply(src[i]);
    nd[i] = cd.apply(dst[i]);
  }
  if (n == 4) {
    if (has_collinear_triple({ns[0], ns[1], ns[2], ns[3]})) {
      throw Error(ErrorKind::kDegenerate, "three source points are collinear");
    }
  } else if (all_collinear(ns)) {
    throw Error(ErrorKind::kDegenerate, "source points are collinear");
  }

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ns[i].x, y = ns[i].y, u = nd[i].x, v = nd[i].y;
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(r + 1) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  // A unique solution needs a one-dimensional null space.
  if (sv(7) <= 1e-12 * sv(0)) {
    throw Error(ErrorKind::kDegenerate, "DLT system is rank deficient");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = cd.inverse() * hn * cs.matrix();
  return Homography(from_eigen(full));
}

RansacResult ransac_homography(std::span<const Vec2> src,
                               std::span<const Vec2> dst,
                               const RansacConfig& cfg) {
  if (src.size() != dst.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "RANSAC needs the same number of source and target points");
  }
  if (src.size() < 4) {
    throw Error(ErrorKind::kInvalidArgument, "RANSAC needs at least 4 points");
  }
  if (cfg.iterations <= 0 || !(cfg.reproj_thresh >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "bad RANSAC configuration");
  }

  const std::size_t n = src.size();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::optional<Homography> best;
  int best_count = -1;
  int budget = cfg.iterations;
  int it = 0;
  std::array<std::size_t, 4> idx{};
  std::array<Vec2, 4> s{}, d{};
  for (; it < budget; ++it) {
    if (n == 4) {
      idx = {0, 1, 2, 3};
    } else {
      for (int k = 0; k < 4; ++k) {
        bool fresh = false;
        while (!fresh) {
          idx[k] = pick(rng);
          fresh = std::find(idx.begin(), idx.begin() + k, idx[k]) ==
                  idx.begin() + k;
        }
      }
    }
    for (int k = 0; k < 4; ++k) {
      s[k] = src[idx[k]];
      d[k] = dst[idx[k]];
    }
    Homography model;
    try {
      model = estimate_homography_dlt(s, d);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDegenerate) continue;
      throw;
    }
    const int count = count_inliers(model, src, dst, cfg.reproj_thresh, nullptr);
    if (count > best_count) {
      best_count = count;
      best = model;
      budget = adaptive_iterations(static_cast<double>(count) / n,
                                   cfg.confidence, cfg.iterations);
      if (n == 4) budget = std::min(budget, it + 1);
    }
    if (n == 4) break;
  }
  if (!best) {
    throw Error(ErrorKind::kDegenerate, "every minimal sample was degenerate");
  }

  RansacResult result;
  result.iterations_run = std::min(it + 1, cfg.iterations);
  result.inliers.assign(n, 0);
  count_inliers(*best, src, dst, cfg.reproj_thresh, &result.inliers);
  result.homography = *best;
  int final_count = best_count;

  if (best_count >= 4) {
    std::vector<Vec2> in_src, in_dst;
    in_src.reserve(static_cast<std::size_t>(best_count));
    in_dst.reserve(static_cast<std::size_t>(best_count));
    for (std::size_t i = 0; i < n; ++i) {
      if (result.inliers[i]) {
        in_src.push_back(src[i]);
        in_dst.push_back(dst[i]);
      }
    }
    try {
      const Homography refit = estimate_homography_dlt(in_src, in_dst);
      std::vector<std::uint8_t> refit_mask(n, 0);
      const int refit_count =
          count_inliers(refit, src, dst, cfg.reproj_thresh, &refit_mask);
      if (refit_count >= best_count) {
        result.homography = refit;
        result.inliers = std::move(refit_mask);
        final_count = refit_count;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerate) throw;
    }
  }
  result.inlier_ratio = static_cast<double>(final_count) / static_cast<double>(n);
  return result;
}

FlowField flow_from_homography(const Homography& h, const BoolMap& region) {
  FlowField out(region.width(), region.height());
  out.valid = BoolMap(region.width(), region.height(), 0);
  bool any = false;
  for (int y = 0; y < region.height(); ++y) {
    for (int x = 0; x < region.width(); ++x) {
      if (region(x, y) == 0) continue;
      any = true;
      const Vec2 q = h.project({static_cast<double>(x), static_cast<double>(y)});
      out.u(x, y) = q.x - x;
      out.v(x, y) = q.y - y;
      out.valid(x, y) = 1;
    }
  }
  if (!any) throw Error(ErrorKind::kInvalidArgument, "empty region");
  return out;
}

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kNone: return "none";
    case RejectReason::kTooFewReliable: return "too_few_reliable";
    case RejectReason::kLowInliers: return "low_inliers";
    case RejectReason::kDegenerate: return "degenerate";
  }
  return "unknown";
}

namespace {

struct RegionPixels {
  std::vector<Vec2> all;
  std::vector<Vec2> reliable_src;
  std::vector<Vec2> reliable_dst;
};

RegionRefinement fit_region(int segment_id, int occluded,
                            const RegionPixels& px, const RefineConfig& cfg,
                            FlowField& refined_region) {
  RegionRefinement r;
  r.segment_id = segment_id;
  r.region_pixels = static_cast<int>(px.all.size());
  r.occluded_pixels = occluded;
  r.correspondences_used = static_cast<int>(px.reliable_src.size());
  r.reliable_fraction = px.all.empty()
                            ? 0.0
                            : static_cast<double>(px.reliable_src.size()) /
                                  static_cast<double>(px.all.size());
  if (r.reliable_fraction < cfg.min_reliable || px.reliable_src.size() < 4) {
    r.reject_reason = RejectReason::kTooFewReliable;
    return r;
  }

  RansacConfig rc = cfg.ransac;
  rc.seed = splitmix64(cfg.ransac.seed ^
                       splitmix64(static_cast<std::uint64_t>(segment_id)));
  RansacResult fit;
  try {
    fit = ransac_homography(px.reliable_src, px.reliable_dst, rc);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerate) throw;
    r.reject_reason = RejectReason::kDegenerate;
    return r;
  }
  r.inlier_ratio = fit.inlier_ratio;
  r.homography = fit.homography;
  if (fit.inlier_ratio < cfg.min_inliers) {
    r.reject_reason = RejectReason::kLowInliers;
    return r;
  }

  std::vector<Vec2> flow_values;
  flow_values.reserve(px.all.size());
  for (const Vec2& p : px.all) {
    const auto q = fit.homography.try_project(p);
    if (!q) {
      r.reject_reason = RejectReason::kDegenerate;
      return r;
    }
    flow_values.push_back({q->x - p.x, q->y - p.y});
  }
  for (std::size_t i = 0; i < px.all.size(); ++i) {
    const int x = static_cast<int>(px.all[i].x);
    const int y = static_cast<int>(px.all[i].y);
    refined_region.set(x, y, flow_values[i]);
  }
  r.accepted = true;
  return r;
}

}  // namespace

RefineResult refine_regions(const FlowField& flow, const Segmentation& seg,
                            const OcclusionMap& occ, const RefineConfig& cfg) {
  const int width = flow.width();
  const int height = flow.height();
  require_same_dims(seg.width(), seg.height(), width, height,
                    "refine_regions segmentation");
  require_same_dims(occ.width(), occ.height(), width, height,
                    "refine_regions occlusion");
  if (cfg.max_regions < 0) {
    throw Error(ErrorKind::kInvalidArgument, "max_regions must be >= 0");
  }

  std::vector<int> occluded(static_cast<std::size_t>(seg.num_segments), 0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (occ(x, y)) ++occluded[static_cast<std::size_t>(seg.ids(x, y))];
    }
  }
  std::vector<int> candidates;
  for (int s = 0; s < seg.num_segments; ++s) {
    if (occluded[static_cast<std::size_t>(s)] > 0) candidates.push_back(s);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    return occluded[static_cast<std::size_t>(a)] >
           occluded[static_cast<std::size_t>(b)];
  });
  if (static_cast<int>(candidates.size()) > cfg.max_regions) {
    candidates.resize(static_cast<std::size_t>(cfg.max_regions));
  }

  std::vector<int> slot(static_cast<std::size_t>(seg.num_segments), -1);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    slot[static_cast<std::size_t>(candidates[i])] = static_cast<int>(i);
  }
  std::vector<RegionPixels> pixels(candidates.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int k = slot[static_cast<std::size_t>(seg.ids(x, y))];
      if (k < 0) continue;
      RegionPixels& px = pixels[static_cast<std::size_t>(k)];
      const Vec2 p{static_cast<double>(x), static_cast<double>(y)};
      px.all.push_back(p);
      const Vec2 q{x + flow.u(x, y), y + flow.v(x, y)};
      const bool in_frame =
          q.x >= 0.0 && q.x <= width - 1 && q.y >= 0.0 && q.y <= height - 1;
      if (!occ(x, y) && in_frame && flow.is_valid(x, y)) {
        px.reliable_src.push_back(p);
        px.reliable_dst.push_back(q);
      }
    }
  }

  RefineResult result;
  result.refined = flow;
  result.region_mask = BoolMap(width, height, 0);
  result.regions.resize(candidates.size());

  auto run = [&](std::size_t k) {
    result.regions[k] =
        fit_region(candidates[k], occluded[static_cast<std::size_t>(candidates[k])],
                   pixels[k], cfg, result.refined);
  };
  // Regions are disjoint, so workers write to disjoint pixels.
  const int workers = std::clamp(cfg.workers, 1,
                                 std::max(1, static_cast<int>(candidates.size())));
  if (workers == 1) {
    for (std::size_t k = 0; k < candidates.size(); ++k) run(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t k = next++; k < candidates.size(); k = next++) run(k);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!result.regions[k].accepted) continue;
    for (const Vec2& p : pixels[k].all) {
      result.region_mask(static_cast<int>(p.x), static_cast<int>(p.y)) = 1;
    }
  }
  return result;
}

}  // namespace samflow
