#pragma once

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include <map>
#include <queue>
#include <string>
#include <utility>

#include "aniclip/document.hpp"

namespace aniclip {

/// Evaluates a cubic Bézier segment.
inline Vec2 cubic_point(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double u) {
  const double v = 1.0 - u;
  return v * v * v * p0 + 3 * v * v * u * p1 + 3 * v * u * u * p2 + u * u * u * p3;
}

/// Appends the flattening of a cubic (excluding p0) so that the polyline stays
/// within `tol` of the curve. Flatness is measured as the handle distance to
/// the chord, which bounds the curve deviation via the convex hull.
inline void flatten_cubic(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double tol, std::vector<Vec2>& out,
                          int depth = 0) {
  auto dist_to_chord = [&](Vec2 p) { return project_to_segment(p, p0, p3).dist; };
  if (depth >= 24 || std::max(dist_to_chord(p1), dist_to_chord(p2)) <= tol) {
    out.push_back(p3);
    return;
  }
  const Vec2 a = 0.5 * (p0 + p1), b = 0.5 * (p1 + p2), c = 0.5 * (p2 + p3);
  const Vec2 d = 0.5 * (a + b), e = 0.5 * (b + c), m = 0.5 * (d + e);
  flatten_cubic(p0, a, d, m, tol, out, depth + 1);
  flatten_cubic(m, e, c, p3, tol, out, depth + 1);
}

/// Flattens a subpath into a ring (closing segment implied).
inline std::vector<Vec2> flatten_subpath(const SubPath& s, double tol) {
  std::vector<Vec2> ring;
  if (s.points.empty()) return ring;
  ring.push_back(s.points[0]);
  s.for_each_segment([&](SegmentKind kind, const std::array<std::size_t, 4>& idx, std::size_t) {
    if (kind == SegmentKind::Line) {
      ring.push_back(s.points[idx[1]]);
    } else {
      flatten_cubic(s.points[idx[0]], s.points[idx[1]], s.points[idx[2]], s.points[idx[3]], tol, ring);
    }
  });
  if (ring.size() > 1 && ring.back() == ring.front()) ring.pop_back();
  return ring;
}

/// Removes repeated and collinear vertices of a closed ring.
inline std::vector<Vec2> clean_ring(std::vector<Vec2> ring, double eps = 1e-12) {
  bool changed = true;
  while (changed && ring.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < ring.size() && ring.size() > 3; ++i) {
      const std::size_t n = ring.size();
      const Vec2 a = ring[(i + n - 1) % n], b = ring[i], c = ring[(i + 1) % n];
      const double scale = std::max(norm2(b - a), norm2(c - b));
      if (distance(a, b) <= eps || std::abs(orient(a, b, c)) <= eps * scale) {
        // Drop b only when it does not reverse direction (a spike keeps its tip).
        if (distance(a, b) <= eps || dot(b - a, c - b) >= 0) {
          ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
          changed = true;
        }
      }
    }
  }
  return ring;
}

/// Douglas–Peucker simplification of a closed ring; keeps at least 3 vertices.
inline std::vector<Vec2> simplify_ring(const std::vector<Vec2>& ring, double tol) {
  const std::size_t n = ring.size();
  if (n <= 3 || tol <= 0) return ring;
  // Anchor at vertex 0 and the vertex farthest from it.
  std::size_t far = 0;
  double best = -1;
  for (std::size_t i = 1; i < n; ++i)
    if (const double d = distance(ring[0], ring[i]); d > best) best = d, far = i;
  std::vector<char> keep(n, 0);
  keep[0] = keep[far] = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack = {{0, far}, {far, n}};
  while (!stack.empty()) {
    auto [a, b] = stack.back();
    stack.pop_back();
    const Vec2 pa = ring[a], pb = ring[b % n];
    double dmax = -1;
    std::size_t imax = a;
    for (std::size_t i = a + 1; i < b; ++i)
      if (const double d = project_to_segment(ring[i], pa, pb).dist; d > dmax) dmax = d, imax = i;
    if (dmax > tol) {
      keep[imax] = 1;
      stack.push_back({a, imax});
      stack.push_back({imax, b});
    }
  }
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(ring[i]);
  if (out.size() < 3) return ring;
  return out;
}

namespace contour_detail {

namespace bg = boost::geometry;
using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint, false, false>;  // counter-clockwise, open rings
using BMulti = bg::model::multi_polygon<BPolygon>;

inline BMulti ring_region(const std::vector<Vec2>& ring) {
  BPolygon poly;
  for (auto p : ring) poly.outer().push_back(BPoint(p.x, p.y));
  bg::correct(poly);
  BMulti m;
  if (std::abs(bg::area(poly)) > 0) m.push_back(std::move(poly));
  return m;
}

inline std::vector<Vec2> to_ring(const BPolygon::ring_type& r) {
  std::vector<Vec2> out;
  for (const auto& p : r) out.push_back({p.x(), p.y()});
  if (out.size() > 1 && out.back() == out.front()) out.pop_back();
  return out;
}

}  // namespace contour_detail

struct ContourResult {
  Polygon polygon;
  std::size_t component_count = 0;  // >1 means only the largest was kept
};

/// Union silhouette of a layer's filled paths. Each path's own region follows
/// the even-odd combination of its subpaths; paths are then unioned. When the
/// silhouette has several components, the largest by area is returned.
inline ContourResult extract_contour(const Layer& layer, double flatten_tol) {
  using namespace contour_detail;
  BMulti acc;
  for (const auto& path : layer.paths) {
    if (path.fill.a <= 0.0) continue;
    BMulti region;
    for (const auto& s : path.subpaths) {
      const auto ring = flatten_subpath(s, flatten_tol);
      if (ring.size() < 3) continue;
      BMulti next;
      bg::sym_difference(region, ring_region(ring), next);
      region = std::move(next);
    }
    BMulti merged;
    bg::union_(acc, region, merged);
    acc = std::move(merged);
  }
  if (acc.empty()) fail(ErrorKind::Rig, "layer '" + layer.name + "' has an empty silhouette");
  std::size_t best = 0;
  for (std::size_t i = 1; i < acc.size(); ++i)
    if (bg::area(acc[i]) > bg::area(acc[best])) best = i;
  ContourResult res;
  res.component_count = acc.size();
  res.polygon.vertices = clean_ring(to_ring(acc[best].outer()));
  if (signed_area(res.polygon.vertices) < 0)
    std::reverse(res.polygon.vertices.begin(), res.polygon.vertices.end());
  for (const auto& h : acc[best].inners()) {
    auto ring = clean_ring(to_ring(h));
    if (signed_area(ring) > 0) std::reverse(ring.begin(), ring.end());
    if (ring.size() >= 3) res.polygon.holes.push_back(std::move(ring));
  }
  return res;
}

/// Silhouette of a whole document (all layers).
inline ContourResult extract_contour(const ClipartDocument& doc, double flatten_tol) {
  Layer all{"document", 0, {}};
  for (const auto& l : doc.layers) all.paths.insert(all.paths.end(), l.paths.begin(), l.paths.end());
  return extract_contour(all, flatten_tol);
}

/// Boundary polygon (pixel-corner coordinates) of the largest 4-connected
/// component of pixels whose alpha exceeds `alpha_threshold`. The outer ring
/// follows pixel cracks; enclosed background regions become holes.
inline ContourResult trace_bitmap(const RasterImage& image, double alpha_threshold) {
  const int w = image.width, h = image.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  auto fg = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && image.at(x, y, 3) > alpha_threshold; };
  std::vector<std::size_t> sizes;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y) || label[static_cast<std::size_t>(y) * w + x] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      std::size_t count = 0;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      label[static_cast<std::size_t>(y) * w + x] = id;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop();
        ++count;
        const int dx[] = {1, -1, 0, 0}, dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k], ny = cy + dy[k];
          if (fg(nx, ny) && label[static_cast<std::size_t>(ny) * w + nx] < 0) {
            label[static_cast<std::size_t>(ny) * w + nx] = id;
            q.push({nx, ny});
          }
        }
      }
      sizes.push_back(count);
    }
  if (sizes.empty()) fail(ErrorKind::Rig, "image has no pixel with alpha above threshold");
  const int comp = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  auto in = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h && label[static_cast<std::size_t>(y) * w + x] == comp;
  };

  // Directed crack edges with the component on the left (positive orientation).
  using Corner = std::pair<int, int>;
  std::multimap<Corner, Corner> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!in(x, y)) continue;
      if (!in(x, y - 1)) edges.insert({{x, y}, {x + 1, y}});
      if (!in(x + 1, y)) edges.insert({{x + 1, y}, {x + 1, y + 1}});
      if (!in(x, y + 1)) edges.insert({{x + 1, y + 1}, {x, y + 1}});
      if (!in(x - 1, y)) edges.insert({{x, y + 1}, {x, y}});
    }

  auto take_cycle = [&](Corner start) {
    std::vector<Vec2> ring;
    Corner cur = start;
    Corner prev_dir{0, 0};
    while (true) {
      auto [lo, hi] = edges.equal_range(cur);
      if (lo == hi) break;
      auto pick = lo;
      if (std::next(lo) != hi) {
        // Pinch corner: take the sharpest left turn so diagonal pixels stay separate.
        int best_rank = 4;
        for (auto it = lo; it != hi; ++it) {
          const Corner d{it->second.first - cur.first, it->second.second - cur.second};
          const int c = prev_dir.first * d.second - prev_dir.second * d.first;
          const int s = prev_dir.first * d.first + prev_dir.second * d.second;
          const int rank = c > 0 ? 0 : (s > 0 ? 1 : (c < 0 ? 2 : 3));
          if (rank < best_rank) best_rank = rank, pick = it;
        }
      }
      ring.push_back({static_cast<double>(cur.first), static_cast<double>(cur.second)});
      const Corner nxt = pick->second;
      prev_dir = {nxt.first - cur.first, nxt.second - cur.second};
      edges.erase(pick);
      cur = nxt;
      if (cur == start) break;
    }
    return ring;
  };

  ContourResult res;
  res.component_count = sizes.size();
  res.polygon.vertices = clean_ring(take_cycle(edges.begin()->first));
  while (!edges.empty()) {
    auto ring = clean_ring(take_cycle(edges.begin()->first));
    if (ring.size() >= 3) res.polygon.holes.push_back(std::move(ring));
  }
  return res;
}

}  // namespace aniclip
