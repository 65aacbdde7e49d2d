// Internal shared marching-squares tracer. Both the certificate contours and
// the grid zero-contours funnel through trace_zero so the two artifact kinds
// stitch, orient, and serialize identically.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "reachsos/certify.hpp"

namespace reachsos {
namespace detail {

struct MarchGrid {
  int nx = 0;  // node counts per axis, >= 2 each
  int ny = 0;
  std::function<double(int)> x;            // node coordinate, 0..nx-1
  std::function<double(int)> y;            // node coordinate, 0..ny-1
  std::function<double(int, int)> value;   // node value (ix, iy)
  std::function<double(double, double)> center;  // saddle disambiguation
  // Vertices with x^2 + y^2 beyond this are dropped along with their
  // segments (infinity = keep everything).
  double clip_r2 = std::numeric_limits<double>::infinity();
};

inline LevelSetContour trace_zero(const MarchGrid& g) {
  LevelSetContour out;

  // Crossing vertices are cached per grid edge so the two cells sharing an
  // edge agree on the vertex bit-exactly; stitching can then match segment
  // endpoints by key instead of by coordinate.
  std::map<int64_t, std::array<double, 2>> vpos;
  auto hkey = [&](int ix, int jy) { return (int64_t(jy) * g.nx + ix) * 2; };
  auto vkey = [&](int ix, int jy) {
    return (int64_t(jy) * g.nx + ix) * 2 + 1;
  };
  auto vertex_h = [&](int ix, int jy) {
    int64_t k = hkey(ix, jy);
    if (vpos.find(k) == vpos.end()) {
      double f0 = g.value(ix, jy), f1 = g.value(ix + 1, jy);
      double tt = f0 / (f0 - f1);
      vpos[k] = {g.x(ix) + tt * (g.x(ix + 1) - g.x(ix)), g.y(jy)};
    }
    return k;
  };
  auto vertex_v = [&](int ix, int jy) {
    int64_t k = vkey(ix, jy);
    if (vpos.find(k) == vpos.end()) {
      double f0 = g.value(ix, jy), f1 = g.value(ix, jy + 1);
      double tt = f0 / (f0 - f1);
      vpos[k] = {g.x(ix), g.y(jy) + tt * (g.y(jy + 1) - g.y(jy))};
    }
    return k;
  };

  struct Seg {
    int64_t a, b;
  };
  std::vector<Seg> segs;
  for (int cy = 0; cy + 1 < g.ny; ++cy) {
    for (int cx = 0; cx + 1 < g.nx; ++cx) {
      bool p0 = g.value(cx, cy) > 0.0;          // bottom-left
      bool p1 = g.value(cx + 1, cy) > 0.0;      // bottom-right
      bool p2 = g.value(cx + 1, cy + 1) > 0.0;  // top-right
      bool p3 = g.value(cx, cy + 1) > 0.0;      // top-left
      int code = int(p0) | int(p1) << 1 | int(p2) << 2 | int(p3) << 3;
      if (code == 0 || code == 15) continue;
      auto bottom = [&] { return vertex_h(cx, cy); };
      auto top = [&] { return vertex_h(cx, cy + 1); };
      auto left = [&] { return vertex_v(cx, cy); };
      auto right = [&] { return vertex_v(cx + 1, cy); };
      switch (code) {
        case 1:
        case 14:
          segs.push_back({left(), bottom()});
          break;
        case 2:
        case 13:
          segs.push_back({bottom(), right()});
          break;
        case 3:
        case 12:
          segs.push_back({left(), right()});
          break;
        case 4:
        case 11:
          segs.push_back({right(), top()});
          break;
        case 6:
        case 9:
          segs.push_back({bottom(), top()});
          break;
        case 7:
        case 8:
          segs.push_back({left(), top()});
          break;
        case 5:
        case 10: {
          // Both diagonals cut; the sign at the cell center picks which
          // pair of corners the positive region connects.
          double fc = g.center(0.5 * (g.x(cx) + g.x(cx + 1)),
                               0.5 * (g.y(cy) + g.y(cy + 1)));
          bool center_pos = fc > 0.0;
          bool corners_05 = (code == 5);  // positive at bottom-left/top-right
          if (corners_05 == center_pos) {
            segs.push_back({bottom(), right()});
            segs.push_back({left(), top()});
          } else {
            segs.push_back({left(), bottom()});
            segs.push_back({right(), top()});
          }
          break;
        }
        default:
          break;
      }
    }
  }

  std::vector<Seg> kept;
  for (const Seg& s : segs) {
    const auto& a = vpos[s.a];
    const auto& b = vpos[s.b];
    if (a[0] * a[0] + a[1] * a[1] > g.clip_r2) continue;
    if (b[0] * b[0] + b[1] * b[1] > g.clip_r2) continue;
    kept.push_back(s);
  }

  std::map<int64_t, std::vector<int>> adj;
  for (size_t i = 0; i < kept.size(); ++i) {
    adj[kept[i].a].push_back(int(i));
    adj[kept[i].b].push_back(int(i));
  }
  std::vector<char> used(kept.size(), 0);
  auto take_next = [&](int64_t v) {
    auto it = adj.find(v);
    if (it == adj.end()) return -1;
    for (int si : it->second)
      if (!used[size_t(si)]) return si;
    return -1;
  };
  auto unused_degree = [&](int64_t v) {
    auto it = adj.find(v);
    if (it == adj.end()) return 0;
    int d = 0;
    for (int si : it->second)
      if (!used[size_t(si)]) ++d;
    return d;
  };
  auto walk = [&](int64_t start) {
    ContourCurve cur;
    cur.points.push_back(vpos[start]);
    int64_t v = start;
    while (true) {
      int si = take_next(v);
      if (si < 0) break;
      used[size_t(si)] = 1;
      const Seg& s = kept[size_t(si)];
      v = (s.a == v) ? s.b : s.a;
      cur.points.push_back(vpos[v]);
      if (v == start) {
        cur.closed = true;
        break;
      }
    }
    return cur;
  };
  // Open chains first (their endpoints have odd unused degree), then the
  // remaining cycles; both passes scan vertices in key order, so output
  // order is a function of the grid alone.
  for (const auto& [v, lst] : adj) {
    while (unused_degree(v) % 2 == 1) out.curves.push_back(walk(v));
  }
  for (const auto& [v, lst] : adj) {
    while (take_next(v) >= 0) out.curves.push_back(walk(v));
  }
  return out;
}

}  // namespace detail
}  // namespace reachsos
