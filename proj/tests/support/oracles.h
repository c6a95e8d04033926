#pragma once

// Straight-line reference implementations used as test oracles. They share
// no code with the library beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <vector>

#include "samflow/types.h"

namespace samflow::testing {

// Per pixel: smallest covering area, then lowest index. IDs follow raw
// index among winners, background last. Returns the ID grid and, through
// `num`, the segment count.
inline Plane<std::int32_t> brute_segmentation(const std::vector<BoolMap>& masks,
                                              int w, int h, int* num,
                                              bool* has_background) {
  std::vector<long> area(masks.size(), 0);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    for (std::uint8_t b : masks[k].values()) area[k] += b != 0;
  }
  Plane<int> owner(w, h, -1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int best = -1;
      for (std::size_t k = 0; k < masks.size(); ++k) {
        if (!masks[k](x, y)) continue;
        if (best < 0 || area[k] < area[static_cast<std::size_t>(best)]) {
          best = static_cast<int>(k);
        }
      }
      owner(x, y) = best;
    }
  }
  std::vector<int> id_of(masks.size(), -1);
  int next = 0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    bool won = false;
    for (int v : owner.values()) won = won || v == static_cast<int>(k);
    if (won) id_of[k] = next++;
  }
  bool background = false;
  for (int v : owner.values()) background = background || v < 0;
  const int bg = next;
  if (background) ++next;
  Plane<std::int32_t> ids(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int o = owner(x, y);
      ids(x, y) = o < 0 ? bg : id_of[static_cast<std::size_t>(o)];
    }
  }
  *num = next;
  *has_background = background;
  return ids;
}

struct BruteRules {
  int min_h = 50, max_h = 200, min_w = 50, max_w = 400;
  double min_fill = 0.5;
  int min_overlaps = 5;
};

// Indices of masks passing the size, fill and overlap rules.
inline std::set<int> brute_key_objects(const std::vector<BoolMap>& masks,
                                       const BruteRules& r = {}) {
  const std::size_t n = masks.size();
  std::vector<std::vector<char>> touches(n, std::vector<char>(n, 0));
  if (n > 0) {
    const int w = masks[0].width(), h = masks[0].height();
    std::vector<int> here;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        here.clear();
        for (std::size_t k = 0; k < n; ++k) {
          if (masks[k](x, y)) here.push_back(static_cast<int>(k));
        }
        for (int a : here) {
          for (int b : here) {
            if (a != b) touches[a][b] = 1;
          }
        }
      }
    }
  }
  std::set<int> out;
  for (std::size_t k = 0; k < n; ++k) {
    int x0 = std::numeric_limits<int>::max(), y0 = x0, x1 = -1, y1 = -1;
    long area = 0;
    for (int y = 0; y < masks[k].height(); ++y) {
      for (int x = 0; x < masks[k].width(); ++x) {
        if (!masks[k](x, y)) continue;
        ++area;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
    int overlaps = 0;
    for (std::size_t j = 0; j < n; ++j) overlaps += touches[k][j];
    const bool size_ok =
        bh >= r.min_h && bh <= r.max_h && bw >= r.min_w && bw <= r.max_w;
    const bool fill_ok = static_cast<double>(area) >= r.min_fill * bw * bh;
    if (size_ok && fill_ok && overlaps >= r.min_overlaps) {
      out.insert(static_cast<int>(k));
    }
  }
  return out;
}

// Census distance at one pixel written out bit by bit on channel means.
inline double census_at(const Image& a, const Image& b, int x, int y,
                        const BoolMap& valid = {}) {
  auto g = [](const Image& im, int px, int py) {
    double s = 0.0;
    for (int c = 0; c < im.channels(); ++c) s += im.at(px, py, c);
    return s / im.channels();
  };
  double sum = 0.0;
  int bits = 0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      if (dx == 0 && dy == 0) continue;
      if (!valid.empty() && !valid(x + dx, y + dy)) continue;
      const int ba = g(a, x + dx, y + dy) - g(a, x, y) > 1e-9 ? 1 : 0;
      const int bb = g(b, x + dx, y + dy) - g(b, x, y) > 1e-9 ? 1 : 0;
      const double d = ba - bb;
      sum += d * d / (0.1 + d * d);
      ++bits;
    }
  }
  return bits > 0 ? sum / bits : 0.0;
}

inline double brute_epe(const FlowField& est, const FlowField& gt,
                        const BoolMap& mask) {
  double s = 0.0;
  long n = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!mask.empty() && !mask(x, y)) continue;
      if (!gt.is_valid(x, y)) continue;
      s += std::hypot(est.u(x, y) - gt.u(x, y), est.v(x, y) - gt.v(x, y));
      ++n;
    }
  }
  return s / n;
}

inline double brute_fl(const FlowField& est, const FlowField& gt,
                       const BoolMap& mask) {
  long bad = 0, n = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!mask.empty() && !mask(x, y)) continue;
      if (!gt.is_valid(x, y)) continue;
      const double e =
          std::hypot(est.u(x, y) - gt.u(x, y), est.v(x, y) - gt.v(x, y));
      const double m = std::hypot(gt.u(x, y), gt.v(x, y));
      bad += (e > 3.0 && e > 0.05 * m) ? 1 : 0;
      ++n;
    }
  }
  return 100.0 * bad / n;
}

// Smallest |second difference| over the stencils that touch each entry, per
// component; FD checks of the L1 loss skip entries near a kink.
struct KinkDistance {
  Plane<double> u, v;
};

inline KinkDistance kink_distance(const FlowField& f) {
  const int w = f.width(), h = f.height();
  KinkDistance k{Plane<double>(w, h, 1e9), Plane<double>(w, h, 1e9)};
  auto visit = [&](int ax, int ay) {
    for (int y = ay; y < h - ay; ++y) {
      for (int x = ax; x < w - ax; ++x) {
        const double du = f.u(x - ax, y - ay) - 2 * f.u(x, y) + f.u(x + ax, y + ay);
        const double dv = f.v(x - ax, y - ay) - 2 * f.v(x, y) + f.v(x + ax, y + ay);
        for (int s = -1; s <= 1; ++s) {
          double& ku = k.u(x + s * ax, y + s * ay);
          double& kv = k.v(x + s * ax, y + s * ay);
          ku = std::min(ku, std::abs(du));
          kv = std::min(kv, std::abs(dv));
        }
      }
    }
  };
  visit(1, 0);
  visit(0, 1);
  return k;
}

// Central difference of `f` with respect to every (u, v) entry.
inline FlowField numeric_gradient(const FlowField& flow,
                                  const std::function<double(const FlowField&)>& f,
                                  double eps = 1e-4) {
  FlowField g(flow.width(), flow.height());
  FlowField probe = flow;
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      Plane<double>& p = comp == 0 ? probe.u : probe.v;
      const double keep = p[i];
      p[i] = keep + eps;
      const double fp = f(probe);
      p[i] = keep - eps;
      const double fm = f(probe);
      p[i] = keep;
      (comp == 0 ? g.u : g.v)[i] = (fp - fm) / (2.0 * eps);
    }
  }
  return g;
}

// Straight-line 1x1 transform: out[o] = b[o] + sum_i W[o][i] in[i].
inline std::vector<float> dense(const std::vector<float>& in,
                                const std::vector<float>& weight,
                                const std::vector<float>& bias) {
  const std::size_t out_n = bias.size(), in_n = in.size();
  std::vector<float> out(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    float acc = bias[o];
    for (std::size_t i = 0; i < in_n; ++i) acc += weight[o * in_n + i] * in[i];
    out[o] = acc;
  }
  return out;
}

}  // namespace samflow::testing
