#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace aniclip {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
/// Counter-clockwise quarter turn.
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr double norm2(Vec2 a) { return dot(a, a); }
inline double distance(Vec2 a, Vec2 b) { return norm(b - a); }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

inline Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec2{};
}

/// Twice the signed area of (a, b, c); positive when the turn a->b->c is counter-clockwise.
constexpr double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

/// 2D affine map  p -> [a c; b d] p + [e f], in SVG matrix(a b c d e f) order.
struct Affine2 {
  double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

  constexpr Vec2 apply(Vec2 p) const { return {a * p.x + c * p.y + e, b * p.x + d * p.y + f}; }
  /// this ∘ o  (apply o first).
  constexpr Affine2 operator*(const Affine2& o) const {
    return {a * o.a + c * o.b, b * o.a + d * o.b, a * o.c + c * o.d,
            b * o.c + d * o.d, a * o.e + c * o.f + e, b * o.e + d * o.f + f};
  }
  static constexpr Affine2 translate(double tx, double ty) { return {1, 0, 0, 1, tx, ty}; }
  static constexpr Affine2 scale(double sx, double sy) { return {sx, 0, 0, sy, 0, 0}; }
  static Affine2 rotate(double radians) {
    const double cs = std::cos(radians), sn = std::sin(radians);
    return {cs, sn, -sn, cs, 0, 0};
  }
};

/// Shoelace signed area; positive for counter-clockwise rings.
inline double signed_area(std::span<const Vec2> ring) {
  double s = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) s += cross(ring[i], ring[(i + 1) % n]);
  return 0.5 * s;
}

inline Vec2 centroid(std::span<const Vec2> pts) {
  Vec2 c;
  for (auto p : pts) c += p;
  return pts.empty() ? c : c / static_cast<double>(pts.size());
}

struct Bounds {
  Vec2 lo{INFINITY, INFINITY};
  Vec2 hi{-INFINITY, -INFINITY};

  void add(Vec2 p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  }
  bool empty() const { return lo.x > hi.x; }
  double diagonal() const { return empty() ? 0.0 : norm(hi - lo); }
};

inline Bounds bounds_of(std::span<const Vec2> pts) {
  Bounds b;
  for (auto p : pts) b.add(p);
  return b;
}

/// Winding number of `ring` around p (nonzero => inside).
inline int winding_number(std::span<const Vec2> ring, Vec2 p) {
  int w = 0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i], b = ring[(i + 1) % n];
    if (a.y <= p.y) {
      if (b.y > p.y && orient(a, b, p) > 0) ++w;
    } else if (b.y <= p.y && orient(a, b, p) < 0) {
      --w;
    }
  }
  return w;
}

/// Closest-point data of p against segment [a, b]: parameter t in [0,1] and distance.
struct SegmentProjection {
  double t = 0.0;
  double dist = 0.0;
  Vec2 closest;
};

inline SegmentProjection project_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 e = b - a;
  const double len2 = norm2(e);
  double t = len2 > 0.0 ? dot(p - a, e) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q = a + t * e;
  return {t, distance(p, q), q};
}

/// Proper or touching intersection test between closed segments [a,b] and [c,d].
inline bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = orient(c, d, a), d2 = orient(c, d, b);
  const double d3 = orient(a, b, c), d4 = orient(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  if (d1 == 0 && on_seg(c, d, a)) return true;
  if (d2 == 0 && on_seg(c, d, b)) return true;
  if (d3 == 0 && on_seg(a, b, c)) return true;
  if (d4 == 0 && on_seg(a, b, d)) return true;
  return false;
}

/// Barycentric coordinates of p in triangle (a, b, c). Degenerate triangles yield NaNs.
inline std::array<double, 3> barycentric(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const double area = orient(a, b, c);
  const double w0 = orient(b, c, p) / area;
  const double w1 = orient(c, a, p) / area;
  return {w0, w1, 1.0 - w0 - w1};
}

/// Minimum interior angle of a triangle, in degrees.
inline double min_angle_deg(Vec2 a, Vec2 b, Vec2 c) {
  auto angle = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::atan2(std::abs(cross(q - p, r - p)), dot(q - p, r - p));
  };
  const double m = std::min({angle(a, b, c), angle(b, c, a), angle(c, a, b)});
  return m * 180.0 / M_PI;
}

}  // namespace aniclip
