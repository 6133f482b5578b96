#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "aniclip/document.hpp"

namespace aniclip {

/// Rest-pose triangle mesh; triangles are counter-clockwise.
struct TriangleMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> keypoint_vertex;  // keypoint index -> vertex index

  double triangle_area(std::size_t t) const {
    const auto& f = triangles[t];
    return 0.5 * orient(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
  }
  double area() const {
    double a = 0;
    for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
    return a;
  }

  /// Directed edges that belong to exactly one triangle (interior on the left).
  std::vector<std::pair<int, int>> boundary_edges() const {
    std::unordered_map<std::uint64_t, int> count;
    auto key = [](int a, int b) { return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b); };
    for (const auto& f : triangles)
      for (int k = 0; k < 3; ++k) count[key(f[k], f[(k + 1) % 3])]++;
    std::vector<std::pair<int, int>> out;
    for (const auto& f : triangles)
      for (int k = 0; k < 3; ++k) {
        const int a = f[k], b = f[(k + 1) % 3];
        if (!count.count(key(b, a))) out.push_back({a, b});
      }
    return out;
  }
};

namespace tri_detail {

inline std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

/// > 0 when d lies strictly inside the circumcircle of CCW triangle (a, b, c).
inline long double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const long double adx = a.x - d.x, ady = a.y - d.y;
  const long double bdx = b.x - d.x, bdy = b.y - d.y;
  const long double cdx = c.x - d.x, cdy = c.y - d.y;
  const long double ad = adx * adx + ady * ady, bd = bdx * bdx + bdy * bdy, cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

inline Vec2 circumcenter(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 ab = b - a, ac = c - a;
  const double d = 2.0 * cross(ab, ac);
  const double ab2 = norm2(ab), ac2 = norm2(ac);
  return a + Vec2{(ac.y * ab2 - ab.y * ac2) / d, (ab.x * ac2 - ac.x * ab2) / d};
}

class Delaunay {
 public:
  struct Tri {
    std::array<int, 3> v;
    bool alive = true;
  };

  std::vector<Vec2> points;
  std::vector<Tri> tris;

  explicit Delaunay(const Bounds& box) {
    const Vec2 c = 0.5 * (box.lo + box.hi);
    const double r = std::max(box.diagonal(), 1.0) * 64.0;
    points = {c + Vec2{-r, -r}, c + Vec2{r, -r}, c + Vec2{0, r}};
    add_tri(0, 1, 2);
  }

  static constexpr int kSuper = 3;

  int owner(int a, int b) const {
    const auto it = edges_.find(edge_key(a, b));
    return it == edges_.end() ? -1 : it->second;
  }
  bool has_edge(int a, int b) const { return owner(a, b) >= 0 || owner(b, a) >= 0; }

  int insert(Vec2 p) {
    int start = locate(p);
    if (start < 0) fail(ErrorKind::Rig, "triangulation point location failed");
    const int pi = static_cast<int>(points.size());
    points.push_back(p);
    for (int k = 0; k < 3; ++k)
      if (points[tris[start].v[k]] == p) {
        points.pop_back();
        return tris[start].v[k];
      }

    std::vector<int> cavity{start};
    std::vector<char> in_cavity(tris.size(), 0);
    in_cavity[start] = 1;
    for (std::size_t q = 0; q < cavity.size(); ++q) {
      const auto& t = tris[cavity[q]].v;
      for (int k = 0; k < 3; ++k) {
        const int nb = owner(t[(k + 1) % 3], t[k]);
        if (nb < 0 || in_cavity[nb]) continue;
        const auto& u = tris[nb].v;
        if (incircle(points[u[0]], points[u[1]], points[u[2]], p) > 0) {
          in_cavity[nb] = 1;
          cavity.push_back(nb);
        }
      }
    }
    // Keep the cavity star-shaped around p.
    std::vector<std::pair<int, int>> boundary;
    for (bool changed = true; changed;) {
      changed = false;
      boundary.clear();
      for (int ti : cavity) {
        if (!in_cavity[ti]) continue;
        const auto& t = tris[ti].v;
        for (int k = 0; k < 3; ++k) {
          const int a = t[k], b = t[(k + 1) % 3];
          const int nb = owner(b, a);
          if (nb >= 0 && in_cavity[nb]) continue;
          if (orient(points[a], points[b], p) <= 0 && ti != start) {
            in_cavity[ti] = 0;
            changed = true;
            break;
          }
          boundary.push_back({a, b});
        }
        if (changed) break;
      }
    }
    for (int ti : cavity)
      if (in_cavity[ti]) remove_tri(ti);
    for (auto [a, b] : boundary) add_tri(a, b, pi);
    return pi;
  }

  template <typename Fn>
  void for_each_alive(Fn&& fn) const {
    for (std::size_t i = 0; i < tris.size(); ++i)
      if (tris[i].alive) fn(static_cast<int>(i), tris[i].v);
  }

  int opposite(int tri, int a, int b) const {
    for (int k = 0; k < 3; ++k) {
      const int v = tris[tri].v[k];
      if (v != a && v != b) return v;
    }
    return -1;
  }

 private:
  std::unordered_map<std::uint64_t, int> edges_;
  int last_ = 0;

  void add_tri(int a, int b, int c) {
    const int id = static_cast<int>(tris.size());
    tris.push_back({{a, b, c}, true});
    edges_[edge_key(a, b)] = id;
    edges_[edge_key(b, c)] = id;
    edges_[edge_key(c, a)] = id;
    last_ = id;
  }
  void remove_tri(int id) {
    auto& t = tris[id];
    t.alive = false;
    for (int k = 0; k < 3; ++k) {
      const auto it = edges_.find(edge_key(t.v[k], t.v[(k + 1) % 3]));
      if (it != edges_.end() && it->second == id) edges_.erase(it);
    }
  }

  int locate(Vec2 p) const {
    int cur = last_;
    if (cur < 0 || !tris[cur].alive) {
      cur = -1;
      for (std::size_t i = tris.size(); i-- > 0;)
        if (tris[i].alive) {
          cur = static_cast<int>(i);
          break;
        }
    }
    for (std::size_t steps = 0; cur >= 0 && steps < 4 * tris.size() + 16; ++steps) {
      const auto& t = tris[cur].v;
      int next = -1;
      for (int k = 0; k < 3; ++k) {
        if (orient(points[t[k]], points[t[(k + 1) % 3]], p) < 0) {
          next = owner(t[(k + 1) % 3], t[k]);
          break;
        }
      }
      if (next < 0) {
        bool inside = true;
        for (int k = 0; k < 3; ++k) inside = inside && orient(points[t[k]], points[t[(k + 1) % 3]], p) >= 0;
        if (inside) return cur;
        break;
      }
      cur = next;
    }
    // Points on an edge can test slightly outside both neighbours; take the
    // triangle that contains p most nearly.
    int best = -1;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < tris.size(); ++i) {
      if (!tris[i].alive) continue;
      const auto& t = tris[i].v;
      double margin = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) {
        const Vec2 a = points[t[k]], b = points[t[(k + 1) % 3]];
        margin = std::min(margin, orient(a, b, p) / std::max(norm(b - a), 1e-300));
      }
      if (margin > best_margin) best_margin = margin, best = static_cast<int>(i);
    }
    if (best >= 0 && best_margin >= -1e-9 * norm(points[1] - points[0])) return best;
    return -1;
  }
};

}  // namespace tri_detail

struct TriangulateOptions {
  double min_angle_deg = 20.0;
  double max_area = std::numeric_limits<double>::infinity();
  std::size_t max_vertices = 20000;
};

/// Conforming Delaunay triangulation of `poly` with every keypoint inserted as
/// a vertex, refined Ruppert-style until triangles meet the angle and area
/// bounds. Keypoints within 1e-6 of the boundary are nudged inward.
inline TriangleMesh triangulate(const Polygon& poly, std::span<const Vec2> keypoints, const TriangulateOptions& opt) {
  using namespace tri_detail;
  std::vector<std::vector<Vec2>> rings{poly.vertices};
  for (const auto& h : poly.holes) rings.push_back(h);
  const Bounds box = bounds_of(poly.vertices);
  const double diag = box.diagonal();
  if (poly.vertices.size() < 3 || !(std::abs(poly.area()) > 0)) fail(ErrorKind::Rig, "cannot triangulate a degenerate polygon");

  // Keypoint placement.
  std::vector<Vec2> kps(keypoints.begin(), keypoints.end());
  for (std::size_t k = 0; k < kps.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    Vec2 inward;
    for (const auto& r : rings)
      for (std::size_t i = 0; i < r.size(); ++i) {
        const Vec2 a = r[i], b = r[(i + 1) % r.size()];
        const auto pr = project_to_segment(kps[k], a, b);
        if (pr.dist < best) best = pr.dist, inward = perp(normalized(b - a));
      }
    if (best <= 1e-6) {
      kps[k] += 1e-4 * diag * inward;
    } else if (!poly.contains(kps[k])) {
      fail(ErrorKind::Rig, "keypoint " + std::to_string(k) + " (" + std::to_string(keypoints[k].x) + ", " +
                               std::to_string(keypoints[k].y) + ") lies outside the polygon");
    }
    for (std::size_t j = 0; j < k; ++j)
      if (distance(kps[j], kps[k]) <= 1e-9 * diag)
        fail(ErrorKind::Rig, "keypoints " + std::to_string(j) + " and " + std::to_string(k) + " coincide");
  }

  Delaunay dt(box);
  std::vector<std::pair<int, int>> segments;
  std::vector<char> is_input;  // per point: original polygon vertex
  auto mark = [&](int id, bool input) {
    if (static_cast<std::size_t>(id) >= is_input.size()) is_input.resize(id + 1, 0);
    is_input[id] = is_input[id] || input;
  };
  for (const auto& r : rings) {
    std::vector<int> ids;
    for (auto p : r) {
      ids.push_back(dt.insert(p));
      mark(ids.back(), true);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) segments.push_back({ids[i], ids[(i + 1) % ids.size()]});
  }
  std::vector<int> kp_ids;
  for (auto p : kps) {
    kp_ids.push_back(dt.insert(p));
    mark(kp_ids.back(), false);
  }

  auto encroached = [&](const std::pair<int, int>& s) {
    const auto [a, b] = s;
    if (!dt.has_edge(a, b)) return true;
    const Vec2 pa = dt.points[a], pb = dt.points[b];
    for (int t : {dt.owner(a, b), dt.owner(b, a)}) {
      if (t < 0) continue;
      const int c = dt.opposite(t, a, b);
      if (c >= Delaunay::kSuper && dot(pa - dt.points[c], pb - dt.points[c]) < 0) return true;
    }
    return false;
  };
  auto split_point = [&](int a, int b) {
    const Vec2 pa = dt.points[a], pb = dt.points[b];
    const bool ia = a < static_cast<int>(is_input.size()) && is_input[a];
    const bool ib = b < static_cast<int>(is_input.size()) && is_input[b];
    if (ia == ib) return 0.5 * (pa + pb);
    // Concentric shells around an input vertex avoid endless splitting near small angles.
    const Vec2 from = ia ? pa : pb, to = ia ? pb : pa;
    const double len = distance(from, to);
    const double shell = std::exp2(std::round(std::log2(0.5 * len)));
    const double d = (shell > 0.25 * len && shell < 0.75 * len) ? shell : 0.5 * len;
    return from + (d / len) * (to - from);
  };
  auto split_segment = [&](std::size_t si) {
    const auto [a, b] = segments[si];
    const int m = dt.insert(split_point(a, b));
    mark(m, false);
    segments[si] = {a, m};
    segments.push_back({m, b});
  };
  auto recover_segments = [&] {
    for (bool any = true; any && dt.points.size() < opt.max_vertices;) {
      any = false;
      for (std::size_t s = 0; s < segments.size() && dt.points.size() < opt.max_vertices; ++s)
        if (encroached(segments[s])) {
          split_segment(s);
          any = true;
        }
    }
  };
  recover_segments();

  std::vector<char> is_segment_edge;
  auto classify = [&] {
    std::unordered_map<std::uint64_t, char> seg;
    for (auto [a, b] : segments) seg[edge_key(std::min(a, b), std::max(a, b))] = 1;
    std::vector<int> depth(dt.tris.size(), -1);
    std::vector<int> queue;
    std::vector<int> frontier;
    dt.for_each_alive([&](int id, const std::array<int, 3>& v) {
      if (v[0] < Delaunay::kSuper || v[1] < Delaunay::kSuper || v[2] < Delaunay::kSuper) {
        depth[id] = 0;
        queue.push_back(id);
      }
    });
    // Breadth-first over crossings: same depth across plain edges, +1 across segments.
    for (int level = 0; !queue.empty(); ++level) {
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const int t = queue[q];
        const auto& v = dt.tris[t].v;
        for (int k = 0; k < 3; ++k) {
          const int a = v[k], b = v[(k + 1) % 3];
          const int nb = dt.owner(b, a);
          if (nb < 0 || depth[nb] >= 0) continue;
          if (seg.count(edge_key(std::min(a, b), std::max(a, b)))) {
            frontier.push_back(nb);
          } else {
            depth[nb] = level;
            queue.push_back(nb);
          }
        }
      }
      queue.clear();
      for (int t : frontier)
        if (depth[t] < 0) {
          depth[t] = level + 1;
          queue.push_back(t);
        }
      frontier.clear();
    }
    return depth;
  };

  auto is_bad = [&](const std::array<int, 3>& v) {
    const Vec2 a = dt.points[v[0]], b = dt.points[v[1]], c = dt.points[v[2]];
    return min_angle_deg(a, b, c) < opt.min_angle_deg || 0.5 * orient(a, b, c) > opt.max_area;
  };
  std::vector<char> unsplittable;
  while (dt.points.size() < opt.max_vertices) {
    const auto depth = classify();
    unsplittable.resize(dt.tris.size(), 0);
    std::vector<int> bad;
    dt.for_each_alive([&](int id, const std::array<int, 3>& v) {
      if (depth[id] % 2 == 1 && !unsplittable[id] && is_bad(v)) bad.push_back(id);
    });
    if (bad.empty()) break;
    std::size_t inserted = 0;
    for (int id : bad) {
      if (!dt.tris[id].alive || dt.points.size() >= opt.max_vertices) continue;
      const auto v = dt.tris[id].v;
      const Vec2 cc = circumcenter(dt.points[v[0]], dt.points[v[1]], dt.points[v[2]]);
      bool split_any = false;
      for (std::size_t s = 0; s < segments.size(); ++s) {
        const Vec2 pa = dt.points[segments[s].first], pb = dt.points[segments[s].second];
        if (dot(pa - cc, pb - cc) < 0) {
          split_segment(s);
          split_any = true;
          break;
        }
      }
      if (!split_any) {
        if (!is_finite(cc) || !poly.contains(cc)) {
          unsplittable[id] = 1;
          continue;
        }
        mark(dt.insert(cc), false);
      }
      ++inserted;
      recover_segments();
      unsplittable.resize(dt.tris.size(), 0);
    }
    if (inserted == 0) break;
  }
  recover_segments();

  const auto depth = classify();
  TriangleMesh mesh;
  std::vector<int> remap(dt.points.size(), -1);
  auto use = [&](int p) {
    if (remap[p] < 0) {
      remap[p] = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back(dt.points[p]);
    }
    return remap[p];
  };
  for (int p : kp_ids) use(p);
  dt.for_each_alive([&](int id, const std::array<int, 3>& v) {
    if (depth[id] % 2 == 1) mesh.triangles.push_back({use(v[0]), use(v[1]), use(v[2])});
  });
  for (int p : kp_ids) mesh.keypoint_vertex.push_back(remap[p]);
  return mesh;
}

inline TriangleMesh triangulate(const Polygon& poly, std::span<const Vec2> keypoints, double min_angle_deg,
                                double max_area) {
  TriangulateOptions opt;
  opt.min_angle_deg = min_angle_deg;
  opt.max_area = max_area;
  return triangulate(poly, keypoints, opt);
}

}  // namespace aniclip
