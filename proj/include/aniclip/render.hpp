#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aniclip/binding.hpp"
#include "aniclip/document.hpp"
#include "aniclip/triangulate.hpp"

namespace aniclip {

/// Row-major RGB frame composited over white.
struct FrameBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // 3 * width * height

  FrameBuffer() = default;
  FrameBuffer(int w, int h, double fill = 1.0)
      : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, fill) {}

  double* px(int x, int y) { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
  const double* px(int x, int y) const { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  friend bool operator==(const FrameBuffer&, const FrameBuffer&) = default;
};

inline void require_same_shape(const FrameBuffer& a, const FrameBuffer& b, const char* what) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorKind::State, std::string(what) + ": frame shape mismatch (" + std::to_string(a.width) + "x" +
                               std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                               std::to_string(b.height) + ")");
}

namespace render_detail {

/// Signed distance of p from the line through (a, b), positive on the left,
/// and its gradient with respect to a and b.
struct EdgeDistance {
  double sd = 0;
  Vec2 da, db;
};

inline EdgeDistance line_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 e = b - a, w = p - a;
  const double L = norm(e);
  EdgeDistance r;
  if (!(L > 0)) return r;
  const double C = cross(e, w);
  r.sd = C / L;
  const Vec2 de = Vec2{w.y, -w.x} / L - (C / (L * L * L)) * e;
  const Vec2 dw = perp(e) / L;
  r.db = de;
  r.da = -de - dw;
  return r;
}

/// Distance from p to segment (a, b) with its gradient.
inline EdgeDistance segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const auto pr = project_to_segment(p, a, b);
  EdgeDistance r;
  if (pr.t > 0.0 && pr.t < 1.0) {
    r = line_distance(p, a, b);
    if (r.sd < 0) r.sd = -r.sd, r.da = -r.da, r.db = -r.db;
    return r;
  }
  const Vec2 end = pr.t <= 0.0 ? a : b;
  r.sd = distance(p, end);
  const Vec2 g = r.sd > 0 ? (end - p) / r.sd : Vec2{};
  (pr.t <= 0.0 ? r.da : r.db) = g;
  return r;
}

inline double ramp(double sd) { return std::clamp(0.5 + sd, 0.0, 1.0); }

}  // namespace render_detail

// Vector rendering -------------------------------------------------------------

/// A point of a flattened outline as a fixed combination of control points.
struct FlatPoint {
  std::array<int, 4> cp{};
  std::array<double, 4> w{};
  int n = 0;
};

struct ScenePath {
  Rgba fill;
  std::vector<std::vector<FlatPoint>> rings;
};

/// A document prepared for rasterization at one resolution: paths in paint
/// order, each outline flattened with a fixed parameter sampling so that the
/// flattening is a linear (differentiable) function of the control points.
struct VectorScene {
  int width = 0, height = 0;
  double sx = 1, sy = 1;  // canvas units -> pixels
  std::size_t control_point_count = 0;
  std::vector<ScenePath> paths;
};

inline VectorScene prepare_scene(const ClipartDocument& doc, int width, int height) {
  if (width <= 0 || height <= 0) fail(ErrorKind::Config, "render resolution must be positive");
  VectorScene scene;
  scene.width = width;
  scene.height = height;
  scene.sx = width / doc.width;
  scene.sy = height / doc.height;
  // Global control-point offsets follow document order; painting follows z.
  std::vector<std::size_t> offset(doc.layers.size());
  std::size_t total = 0;
  for (std::size_t l = 0; l < doc.layers.size(); ++l) {
    offset[l] = total;
    for (const auto& p : doc.layers[l].paths) total += p.control_point_count();
  }
  scene.control_point_count = total;
  std::vector<std::size_t> order(doc.layers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return doc.layers[a].z_order < doc.layers[b].z_order; });
  for (std::size_t l : order) {
    std::size_t base = offset[l];
    for (const auto& path : doc.layers[l].paths) {
      ScenePath sp;
      sp.fill = path.fill;
      for (const auto& sub : path.subpaths) {
        std::vector<FlatPoint> ring;
        const int b = static_cast<int>(base);
        sub.for_each_segment([&](SegmentKind kind, const std::array<std::size_t, 4>& idx, std::size_t) {
          if (kind == SegmentKind::Line) {
            ring.push_back({{b + static_cast<int>(idx[0])}, {1.0}, 1});
            return;
          }
          double len = 0;
          for (int k = 0; k < 3; ++k) {
            const Vec2 d = sub.points[idx[k + 1]] - sub.points[idx[k]];
            len += std::hypot(d.x * scene.sx, d.y * scene.sy);
          }
          const int n = std::clamp(static_cast<int>(std::ceil(len / 3.0)), 2, 48);
          for (int i = 0; i < n; ++i) {
            const double u = static_cast<double>(i) / n, v = 1.0 - u;
            FlatPoint fp;
            fp.n = 4;
            for (int k = 0; k < 4; ++k) fp.cp[k] = b + static_cast<int>(idx[k]);
            fp.w = {v * v * v, 3 * v * v * u, 3 * v * u * u, u * u * u};
            if (i == 0) fp = {{b + static_cast<int>(idx[0])}, {1.0}, 1};
            ring.push_back(fp);
          }
        });
        if (!sub.closed && !sub.points.empty())
          ring.push_back({{b + static_cast<int>(sub.points.size()) - 1}, {1.0}, 1});
        base += sub.points.size();
        if (ring.size() >= 3) sp.rings.push_back(std::move(ring));
      }
      scene.paths.push_back(std::move(sp));
    }
  }
  return scene;
}

/// What the vector backward pass needs from a forward render.
struct VectorTape {
  struct BandPixel {
    int pixel;
    int ring, edge;  // edge k runs from flat point k to k+1 of the ring
    double below[3];
  };
  struct PathRecord {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // coverage box (inclusive)
    std::vector<std::uint8_t> coverage;     // sample counts out of 16
    std::vector<std::vector<Vec2>> rings;   // flattened outline, pixels
    std::vector<double> orientation;        // +1 when the ring's inside is on the left
    std::vector<BandPixel> band;
    std::uint8_t cov(int x, int y) const {
      if (x < x0 || x > x1 || y < y0 || y > y1) return 0;
      return coverage[static_cast<std::size_t>(y - y0) * (x1 - x0 + 1) + (x - x0)];
    }
  };
  int width = 0, height = 0;
  std::vector<PathRecord> paths;
};

namespace render_detail {

inline Vec2 flat_position(const FlatPoint& fp, std::span<const Vec2> cps, double sx, double sy) {
  Vec2 p{};
  for (int k = 0; k < fp.n; ++k) p += fp.w[k] * cps[fp.cp[k]];
  return {p.x * sx, p.y * sy};
}

/// 4x4-supersampled nonzero-winding coverage of a set of rings inside the
/// frame; returns per-pixel sample counts over the (clipped) bounding box.
inline void rasterize(const std::vector<std::vector<Vec2>>& rings, int W, int H, VectorTape::PathRecord& rec) {
  Bounds box;
  for (const auto& r : rings)
    for (Vec2 p : r) box.add(p);
  if (box.empty()) return;
  rec.x0 = std::max(0, static_cast<int>(std::floor(box.lo.x)));
  rec.y0 = std::max(0, static_cast<int>(std::floor(box.lo.y)));
  rec.x1 = std::min(W - 1, static_cast<int>(std::floor(box.hi.x)));
  rec.y1 = std::min(H - 1, static_cast<int>(std::floor(box.hi.y)));
  if (rec.x0 > rec.x1 || rec.y0 > rec.y1) {
    rec.x1 = rec.x0 - 1;
    return;
  }
  const int bw = rec.x1 - rec.x0 + 1;
  rec.coverage.assign(static_cast<std::size_t>(bw) * (rec.y1 - rec.y0 + 1), 0);
  struct Crossing {
    double x;
    int dir;
  };
  std::vector<Crossing> xs;
  for (int y = rec.y0; y <= rec.y1; ++y)
    for (int sub = 0; sub < 4; ++sub) {
      const double sy = y + (sub + 0.5) / 4.0;
      xs.clear();
      for (const auto& r : rings)
        for (std::size_t i = 0; i < r.size(); ++i) {
          const Vec2 a = r[i], b = r[(i + 1) % r.size()];
          if (a.y == b.y) continue;
          const bool up = a.y < b.y;
          const double lo = up ? a.y : b.y, hi = up ? b.y : a.y;
          if (sy < lo || sy >= hi) continue;
          const double t = (sy - a.y) / (b.y - a.y);
          xs.push_back({a.x + t * (b.x - a.x), up ? 1 : -1});
        }
      if (xs.empty()) continue;
      std::sort(xs.begin(), xs.end(), [](const Crossing& p, const Crossing& q) { return p.x < q.x; });
      int wind = 0;
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        wind += xs[i].dir;
        if (wind == 0) continue;
        // Samples at x = (m + 0.5) / 4 with xa <= x < xb.
        const long long m0 = static_cast<long long>(std::ceil(xs[i].x * 4.0 - 0.5));
        const long long m1 = static_cast<long long>(std::ceil(xs[i + 1].x * 4.0 - 0.5));
        for (long long m = std::max<long long>(m0, 4LL * rec.x0); m < std::min<long long>(m1, 4LL * (rec.x1 + 1)); ++m)
          rec.coverage[static_cast<std::size_t>(y - rec.y0) * bw + static_cast<std::size_t>(m / 4 - rec.x0)]++;
      }
    }
}

}  // namespace render_detail

/// Rasterizes the scene with the given control-point positions (canvas units,
/// indexed like the document's control points).
inline FrameBuffer render_scene(const VectorScene& scene, std::span<const Vec2> control_points,
                                VectorTape* tape = nullptr) {
  using namespace render_detail;
  if (control_points.size() != scene.control_point_count)
    fail(ErrorKind::State, "render: expected " + std::to_string(scene.control_point_count) + " control points, got " +
                               std::to_string(control_points.size()));
  const int W = scene.width, H = scene.height;
  FrameBuffer frame(W, H);
  if (tape) {
    tape->width = W;
    tape->height = H;
    tape->paths.assign(scene.paths.size(), {});
  }
  for (std::size_t pi = 0; pi < scene.paths.size(); ++pi) {
    const auto& path = scene.paths[pi];
    VectorTape::PathRecord local;
    VectorTape::PathRecord& rec = tape ? tape->paths[pi] : local;
    for (const auto& ring : path.rings) {
      std::vector<Vec2> pts;
      pts.reserve(ring.size());
      for (const auto& fp : ring) pts.push_back(flat_position(fp, control_points, scene.sx, scene.sy));
      rec.orientation.push_back(signed_area(pts) >= 0 ? 1.0 : -1.0);
      rec.rings.push_back(std::move(pts));
    }
    const double alpha = path.fill.a;
    if (alpha <= 0.0 || rec.rings.empty()) continue;
    rasterize(rec.rings, W, H, rec);

    if (tape) {
      // Pixels whose centres lie within half a pixel of an outline edge.
      for (std::size_t r = 0; r < rec.rings.size(); ++r) {
        const auto& ring = rec.rings[r];
        for (std::size_t e = 0; e < ring.size(); ++e) {
          const Vec2 a = ring[e], b = ring[(e + 1) % ring.size()];
          const int xa = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - 1)));
          const int xb = std::min(W - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + 1)));
          const int ya = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - 1)));
          const int yb = std::min(H - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + 1)));
          for (int y = ya; y <= yb; ++y)
            for (int x = xa; x <= xb; ++x) {
              const Vec2 p{x + 0.5, y + 0.5};
              const auto pr = project_to_segment(p, a, b);
              if (pr.t <= 0.0 || pr.t >= 1.0 || pr.dist >= 0.5) continue;
              VectorTape::BandPixel bp{y * W + x, static_cast<int>(r), static_cast<int>(e), {}};
              const double* c = frame.px(x, y);
              std::copy(c, c + 3, bp.below);
              rec.band.push_back(bp);
            }
        }
      }
    }

    const double fill[3] = {path.fill.r, path.fill.g, path.fill.b};
    for (int y = rec.y0; y <= rec.y1; ++y)
      for (int x = rec.x0; x <= rec.x1; ++x) {
        const std::uint8_t n = rec.cov(x, y);
        if (n == 0) continue;
        const double k = alpha * (n / 16.0);
        double* c = frame.px(x, y);
        for (int ch = 0; ch < 3; ++ch) c[ch] = c[ch] * (1.0 - k) + fill[ch] * k;
      }
  }
  return frame;
}

/// Gradient w.r.t. the control points (canvas units) under a smoothed
/// coverage model: every outline edge is a one-pixel linear ramp.
inline std::vector<Vec2> scene_backward(const VectorScene& scene, const VectorTape& tape, const FrameBuffer& upstream) {
  using namespace render_detail;
  if (upstream.width != tape.width || upstream.height != tape.height || tape.paths.size() != scene.paths.size())
    fail(ErrorKind::State, "vector backward: tape does not match the upstream gradient");
  std::vector<Vec2> grad(scene.control_point_count);
  const int W = tape.width, H = tape.height;
  std::vector<double> transmit(static_cast<std::size_t>(W) * H, 1.0);
  for (std::size_t pi = scene.paths.size(); pi-- > 0;) {
    const auto& path = scene.paths[pi];
    const auto& rec = tape.paths[pi];
    const double alpha = path.fill.a;
    if (alpha <= 0.0) continue;
    const double fill[3] = {path.fill.r, path.fill.g, path.fill.b};
    for (const auto& bp : rec.band) {
      const int x = bp.pixel % W, y = bp.pixel / W;
      const double* g = upstream.px(x, y);
      double dsd = 0;
      for (int c = 0; c < 3; ++c) dsd += g[c] * alpha * (fill[c] - bp.below[c]);
      dsd *= transmit[bp.pixel];
      if (dsd == 0.0) continue;
      const auto& ring = rec.rings[bp.ring];
      const std::size_t e0 = bp.edge, e1 = (e0 + 1) % ring.size();
      const auto d = line_distance({x + 0.5, y + 0.5}, ring[e0], ring[e1]);
      const double s = rec.orientation[bp.ring];
      const auto& fr = path.rings[bp.ring];
      for (auto [fi, gd] : {std::pair{e0, d.da}, std::pair{e1, d.db}}) {
        const FlatPoint& fp = fr[fi];
        const Vec2 gpx = (s * dsd) * gd;
        const Vec2 gcanvas{gpx.x * scene.sx, gpx.y * scene.sy};
        for (int k = 0; k < fp.n; ++k) grad[fp.cp[k]] += fp.w[k] * gcanvas;
      }
    }
    for (int y = rec.y0; y <= rec.y1; ++y)
      for (int x = rec.x0; x <= rec.x1; ++x)
        if (const auto n = rec.cov(x, y)) transmit[static_cast<std::size_t>(y) * W + x] *= 1.0 - alpha * (n / 16.0);
  }
  return grad;
}

/// Control points carried by the deformed mesh.
inline std::vector<Vec2> relocate_all(const BarycentricBinding& binding, const TriangleMesh& mesh,
                                      std::span<const Vec2> deformed) {
  std::vector<Vec2> out(binding.entries.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = binding.relocate(i, mesh, deformed);
  return out;
}

/// Chains control-point gradients back to mesh vertices.
inline std::vector<Vec2> relocate_backward(const BarycentricBinding& binding, const TriangleMesh& mesh,
                                           std::span<const Vec2> grad_points) {
  std::vector<Vec2> g(mesh.vertices.size());
  for (std::size_t i = 0; i < binding.entries.size(); ++i) {
    const auto& e = binding.entries[i];
    const auto& f = mesh.triangles[e.triangle];
    for (int k = 0; k < 3; ++k) g[f[k]] += e.weights[k] * grad_points[i];
  }
  return g;
}

/// Triangles whose orientation flipped in the deformed pose.
inline std::vector<int> inverted_triangles(const TriangleMesh& mesh, std::span<const Vec2> deformed) {
  std::vector<int> out;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    if (orient(deformed[f[0]], deformed[f[1]], deformed[f[2]]) <= 0) out.push_back(static_cast<int>(t));
  }
  return out;
}

struct VectorRender {
  FrameBuffer frame;
  std::vector<int> inverted;  // reported, still rendered
};

/// Renders a document whose control points are bound to a (deformed) mesh.
inline VectorRender render_vector(const VectorScene& scene, const BarycentricBinding& binding, const TriangleMesh& mesh,
                                  std::span<const Vec2> deformed, VectorTape* tape = nullptr) {
  VectorRender out;
  out.inverted = inverted_triangles(mesh, deformed);
  const auto cps = relocate_all(binding, mesh, deformed);
  out.frame = render_scene(scene, cps, tape);
  return out;
}
// Bitmap rendering -------------------------------------------------------------

/// Source texture stored as q = a·(rgb − 1), so a frame pixel is 1 + cov·q
/// and transparent (or out-of-image) texels leave the white background.
struct BitmapSource {
  int width = 0, height = 0;
  std::vector<double> q;  // 3 per texel

  explicit BitmapSource(const RasterImage& img) : width(img.width), height(img.height) {
    q.resize(static_cast<std::size_t>(3) * width * height);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          q[3 * (static_cast<std::size_t>(y) * width + x) + c] = img.at(x, y, 3) * (img.at(x, y, c) - 1.0);
  }

  const double* texel(int x, int y) const {
    static constexpr double kZero[3] = {0, 0, 0};
    if (x < 0 || y < 0 || x >= width || y >= height) return kZero;
    return &q[3 * (static_cast<std::size_t>(y) * width + x)];
  }

  /// Bilinear sample at s (texel centres at integer + 0.5) with its gradient.
  /// Positions are rounded to a 2^-24 grid first so that rounding noise in
  /// the inverse map cannot break exact resampling at texel centres.
  void sample(Vec2 s, double out[3], Vec2 grad[3]) const {
    constexpr double kGrid = 16777216.0;
    const double fx = std::round((s.x - 0.5) * kGrid) / kGrid, fy = std::round((s.y - 0.5) * kGrid) / kGrid;
    const double flx = std::floor(fx), fly = std::floor(fy);
    const int x0 = static_cast<int>(flx), y0 = static_cast<int>(fly);
    const double tx = fx - flx, ty = fy - fly;
    const double *a = texel(x0, y0), *b = texel(x0 + 1, y0), *c = texel(x0, y0 + 1), *d = texel(x0 + 1, y0 + 1);
    for (int ch = 0; ch < 3; ++ch) {
      const double top = a[ch] + tx * (b[ch] - a[ch]), bot = c[ch] + tx * (d[ch] - c[ch]);
      out[ch] = top + ty * (bot - top);
      grad[ch] = {(1 - ty) * (b[ch] - a[ch]) + ty * (d[ch] - c[ch]), bot - top};
    }
  }
};

namespace render_detail {

/// ∫ clamp(x − x0, 0, 1) dy along the part of segment a→b inside the row
/// band [y0, y0 + 1]. Summed over a closed boundary this is the area of the
/// enclosed region inside the unit box at (x0, y0).
inline double band_integral(Vec2 a, Vec2 b, double x0, double y0) {
  if (a.y == b.y) return 0.0;
  double t0 = (y0 - a.y) / (b.y - a.y), t1 = (y0 + 1 - a.y) / (b.y - a.y);
  if (t0 > t1) std::swap(t0, t1);
  t0 = std::max(t0, 0.0);
  t1 = std::min(t1, 1.0);
  if (t0 >= t1) return 0.0;
  const Vec2 d = b - a;
  double cuts[4] = {t0, t1, t1, t1};
  int n = 1;
  if (d.x != 0.0)
    for (double xc : {x0, x0 + 1}) {
      const double t = (xc - a.x) / d.x;
      if (t > t0 && t < t1) cuts[n++] = t;
    }
  std::sort(cuts + 1, cuts + n);
  cuts[n] = t1;
  double sum = 0;
  for (int k = 0; k < n; ++k) {
    const double ta = cuts[k], tb = cuts[k + 1];
    const double ga = std::clamp(a.x + ta * d.x - x0, 0.0, 1.0), gb = std::clamp(a.x + tb * d.x - x0, 0.0, 1.0);
    sum += 0.5 * (ga + gb) * (tb - ta) * d.y;
  }
  return sum;
}

/// Parameter interval of segment a→b inside the box [x0, x0+1] × [y0, y0+1].
inline bool clip_to_box(Vec2 a, Vec2 b, double x0, double y0, double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1.0;
  const Vec2 d = b - a;
  const double p[4] = {-d.x, d.x, -d.y, d.y};
  const double q[4] = {a.x - x0, x0 + 1 - a.x, a.y - y0, y0 + 1 - a.y};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0) return false;
      continue;
    }
    const double r = q[k] / p[k];
    if (p[k] < 0) t0 = std::max(t0, r);
    else t1 = std::min(t1, r);
  }
  return t0 < t1;
}

/// Calls fn(x, y, row_lo_x) for every pixel box the segment passes through;
/// row_lo_x is the leftmost x of the segment inside that row.
template <class Fn>
void for_each_crossed_pixel(Vec2 a, Vec2 b, int width, int height, Fn&& fn) {
  const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y))));
  const int r1 = std::min(height - 1, static_cast<int>(std::floor(std::max(a.y, b.y))));
  for (int y = r0; y <= r1; ++y) {
    double ta = 0, tb = 1;
    if (a.y != b.y) {
      ta = (y - a.y) / (b.y - a.y);
      tb = (y + 1 - a.y) / (b.y - a.y);
      if (ta > tb) std::swap(ta, tb);
      ta = std::max(ta, 0.0);
      tb = std::min(tb, 1.0);
      if (ta > tb) continue;
    }
    const double xa = a.x + ta * (b.x - a.x), xb = a.x + tb * (b.x - a.x);
    const double lo = std::min(xa, xb), hi = std::max(xa, xb);
    const int c0 = std::max(0, static_cast<int>(std::floor(lo)));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(hi)));
    for (int x = c0; x <= c1; ++x) fn(x, y, lo);
  }
}

}  // namespace render_detail

struct BitmapTape {
  struct Pixel {
    int pixel;
    int triangle;
    std::array<double, 3> beta;
    double cov;
    double q[3];
    Vec2 dq[3];
    bool partial = false;  // coverage is an unclamped box-filtered area
  };
  int width = 0, height = 0;
  double sx = 1, sy = 1;
  double orientation = 1;  // sign turning boundary integrals into positive area
  std::vector<Pixel> pixels;
  std::vector<Vec2> deformed;
};

struct BitmapRender {
  FrameBuffer frame;
  std::vector<int> degenerate;  // skipped triangles
  std::vector<int> inverted;
};

/// Inverse-warps the source image through the deformed mesh. Silhouette
/// pixels are weighted by the exact box-filtered area of the deformed mesh;
/// those whose centre lies outside sample through the affine extension of
/// the nearest boundary triangle.
inline BitmapRender render_bitmap(const BitmapSource& src, const TriangleMesh& mesh, std::span<const Vec2> deformed,
                                  int width, int height, BitmapTape* tape = nullptr) {
  using namespace render_detail;
  if (width <= 0 || height <= 0) fail(ErrorKind::Config, "render resolution must be positive");
  if (deformed.size() != mesh.vertices.size()) fail(ErrorKind::State, "render: deformed pose does not match the mesh");
  const double sx = static_cast<double>(width) / src.width, sy = static_cast<double>(height) / src.height;
  BitmapRender out;
  out.frame = FrameBuffer(width, height);
  out.inverted = inverted_triangles(mesh, deformed);
  std::vector<Vec2> D(deformed.size());
  for (std::size_t i = 0; i < D.size(); ++i) D[i] = {deformed[i].x * sx, deformed[i].y * sy};

  const std::size_t npx = static_cast<std::size_t>(width) * height;
  std::vector<int> tri_of(npx, -1);
  std::vector<std::array<double, 3>> beta(npx);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    const Vec2 a = D[f[0]], b = D[f[1]], c = D[f[2]];
    if (std::abs(0.5 * orient(deformed[f[0]], deformed[f[1]], deformed[f[2]])) < 1e-12) {
      out.degenerate.push_back(static_cast<int>(t));
      continue;
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (tri_of[i] >= 0) continue;
        const auto w = barycentric({x + 0.5, y + 0.5}, a, b, c);
        if (w[0] >= -1e-12 && w[1] >= -1e-12 && w[2] >= -1e-12) tri_of[i] = static_cast<int>(t), beta[i] = w;
      }
  }

  // Box-filtered silhouette coverage: partial terms for boxes an edge passes
  // through, full terms (as a per-row difference array) for boxes left of it.
  const auto boundary = mesh.boundary_edges();
  double orientation = 0;
  for (auto [ia, ib] : boundary) orientation += cross(mesh.vertices[ia], mesh.vertices[ib]);
  orientation = orientation < 0 ? -1.0 : 1.0;
  std::vector<double> area(npx, 0.0), full(npx + 1, 0.0);
  std::vector<char> crossed(npx, 0);
  for (auto [ia, ib] : boundary) {
    const Vec2 a = D[ia], b = D[ib];
    for_each_crossed_pixel(a, b, width, height, [&](int x, int y, double lo) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      crossed[i] = 1;
      if (x == std::max(0, static_cast<int>(std::floor(lo)))) {
        double dy = band_integral(a, b, -1e300, y);  // whole band: clamp saturates at 1
        if (dy != 0.0) {
          const std::size_t row = static_cast<std::size_t>(y) * width;
          full[row] += dy;
          full[row + x] -= dy;
        }
      }
      area[i] += band_integral(a, b, x, y);
    });
  }
  std::vector<int> near_edge(npx, -1);
  {
    std::vector<double> dist(npx, std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < boundary.size(); ++e) {
      const Vec2 a = D[boundary[e].first], b = D[boundary[e].second];
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - 1)));
      const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + 1)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - 1)));
      const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * width + x;
          const double d = project_to_segment({x + 0.5, y + 0.5}, a, b).dist;
          if (d < dist[i]) dist[i] = d, near_edge[i] = static_cast<int>(e);
        }
    }
  }
  std::vector<int> edge_owner(boundary.size(), -1);
  {
    std::unordered_map<std::uint64_t, int> owner;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
      for (int k = 0; k < 3; ++k) owner[tri_detail::edge_key(mesh.triangles[t][k], mesh.triangles[t][(k + 1) % 3])] = static_cast<int>(t);
    for (std::size_t e = 0; e < boundary.size(); ++e)
      edge_owner[e] = owner[tri_detail::edge_key(boundary[e].first, boundary[e].second)];
  }

  if (tape) {
    tape->width = width;
    tape->height = height;
    tape->sx = sx;
    tape->sy = sy;
    tape->orientation = orientation;
    tape->pixels.clear();
    tape->deformed.assign(deformed.begin(), deformed.end());
  }
  for (int y = 0; y < height; ++y) {
    double run = 0;
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      run += full[i];
      int t = tri_of[i];
      std::array<double, 3> w = beta[i];
      double cov = t >= 0 ? 1.0 : 0.0;
      bool partial = false;
      if (crossed[i]) {
        const double raw = orientation * (area[i] + run);
        partial = raw > -1e-9 && raw < 1 + 1e-9;
        cov = std::clamp(raw, 0.0, 1.0);
        if (std::abs(cov - 1.0) < 1e-9) cov = 1.0;
        if (cov < 1e-9) cov = 0.0;
        if (t < 0 && cov > 0.0 && near_edge[i] >= 0) {
          t = edge_owner[near_edge[i]];
          const auto& f = mesh.triangles[t];
          w = barycentric({x + 0.5, y + 0.5}, D[f[0]], D[f[1]], D[f[2]]);
        }
      }
      if (t < 0 || cov <= 0.0) continue;
      if (!std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); })) continue;
      const auto& f = mesh.triangles[t];
      const Vec2 p{(x + 0.5) / sx, (y + 0.5) / sy};
      Vec2 s = p;
      for (int k = 0; k < 3; ++k) s += w[k] * (mesh.vertices[f[k]] - deformed[f[k]]);
      BitmapTape::Pixel rec{static_cast<int>(i), t, w, cov, {}, {}, partial && crossed[i]};
      src.sample(s, rec.q, rec.dq);
      double* c = out.frame.px(x, y);
      for (int ch = 0; ch < 3; ++ch) c[ch] = 1.0 + cov * rec.q[ch];
      if (tape) tape->pixels.push_back(rec);
    }
  }
  return out;
}

/// Gradient w.r.t. the deformed vertices (canvas units).
inline std::vector<Vec2> bitmap_backward(const TriangleMesh& mesh, const BitmapTape& tape, const FrameBuffer& upstream) {
  using namespace render_detail;
  if (upstream.width != tape.width || upstream.height != tape.height)
    fail(ErrorKind::State, "bitmap backward: tape does not match the upstream gradient");
  const auto& d = tape.deformed;
  std::vector<Vec2> grad(mesh.vertices.size());
  std::vector<double> dcov(static_cast<std::size_t>(tape.width) * tape.height, 0.0);
  bool any_partial = false;
  for (const auto& px : tape.pixels) {
    const int x = px.pixel % tape.width, y = px.pixel / tape.width;
    const double* g = upstream.px(x, y);
    const auto& f = mesh.triangles[px.triangle];

    // Through the sample position: ds/dd_k = −β_k · E_rest · E_def⁻¹.
    Vec2 gs{};
    for (int c = 0; c < 3; ++c) gs += g[c] * px.dq[c];
    gs = px.cov * gs;
    if (gs.x != 0.0 || gs.y != 0.0) {
      const Vec2 r1 = mesh.vertices[f[1]] - mesh.vertices[f[0]], r2 = mesh.vertices[f[2]] - mesh.vertices[f[0]];
      const Vec2 d1 = d[f[1]] - d[f[0]], d2 = d[f[2]] - d[f[0]];
      const double det = cross(d1, d2);
      // Inverse of [d1 d2] is [[d2.y, -d2.x], [-d1.y, d1.x]] / det; M = [r1 r2] * inv.
      const double m00 = (r1.x * d2.y - r2.x * d1.y) / det, m01 = (-r1.x * d2.x + r2.x * d1.x) / det;
      const double m10 = (r1.y * d2.y - r2.y * d1.y) / det, m11 = (-r1.y * d2.x + r2.y * d1.x) / det;
      const Vec2 mt{m00 * gs.x + m10 * gs.y, m01 * gs.x + m11 * gs.y};  // Mᵀ gs
      for (int k = 0; k < 3; ++k) grad[f[k]] -= px.beta[k] * mt;
    }
    if (px.partial) {
      for (int c = 0; c < 3; ++c) dcov[px.pixel] += g[c] * px.q[c];
      any_partial = any_partial || dcov[px.pixel] != 0.0;
    }
  }
  if (!any_partial) return grad;

  // Through the coverage: moving the boundary changes the covered area at
  // rate ∫ v·n ds over the part of the edge inside each pixel box.
  for (auto [ia, ib] : mesh.boundary_edges()) {
    const Vec2 a{d[ia].x * tape.sx, d[ia].y * tape.sy}, b{d[ib].x * tape.sx, d[ib].y * tape.sy};
    const Vec2 e = b - a;
    const Vec2 n = tape.orientation * Vec2{e.y, -e.x};  // outward normal scaled by edge length
    for_each_crossed_pixel(a, b, tape.width, tape.height, [&](int x, int y, double) {
      const double gc = dcov[static_cast<std::size_t>(y) * tape.width + x];
      if (gc == 0.0) return;
      double t0, t1;
      if (!clip_to_box(a, b, x, y, t0, t1)) return;
      const double mb = 0.5 * (t1 * t1 - t0 * t0), ma = (t1 - t0) - mb;
      grad[ia] += gc * ma * Vec2{n.x * tape.sx, n.y * tape.sy};
      grad[ib] += gc * mb * Vec2{n.x * tape.sx, n.y * tape.sy};
    });
  }
  return grad;
}

}  // namespace aniclip
