#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "aniclip/document.hpp"

namespace fixtures {

using aniclip::Polygon;
using aniclip::Vec2;

inline Polygon unit_square() { return {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {}}; }
inline Polygon rect_2x1() { return {{{0, 0}, {2, 0}, {2, 1}, {0, 1}}, {}}; }
inline Polygon l_shape() { return {{{0, 0}, {3, 0}, {3, 1}, {1, 1}, {1, 3}, {0, 3}}, {}}; }

inline Polygon t_shape() {
  return {{{2, 0}, {3, 0}, {3, 3}, {5, 3}, {5, 4}, {0, 4}, {0, 3}, {2, 3}}, {}};
}

inline Polygon plus_shape() {
  return {{{1, 0}, {2, 0}, {2, 1}, {3, 1}, {3, 2}, {2, 2}, {2, 3}, {1, 3}, {1, 2}, {0, 2}, {0, 1}, {1, 1}}, {}};
}

/// Five-armed star with outer radius R and inner radius r, centred at c.
inline Polygon star(Vec2 c = {0, 0}, double R = 10, double r = 4, int arms = 5) {
  Polygon p;
  for (int i = 0; i < 2 * arms; ++i) {
    const double a = std::numbers::pi / 2 + i * std::numbers::pi / arms;
    const double rad = i % 2 == 0 ? R : r;
    p.vertices.push_back({c.x + rad * std::cos(a), c.y + rad * std::sin(a)});
  }
  return p;
}

/// Starfish: five straight limbs of width w and length L around a small body.
inline Polygon starfish(double w = 2, double L = 8, double base = 2) {
  Polygon p;
  for (int i = 0; i < 5; ++i) {
    const double a = std::numbers::pi / 2 + i * 2 * std::numbers::pi / 5;
    const Vec2 d{std::cos(a), std::sin(a)}, n{-d.y, d.x};
    p.vertices.push_back(base * d - 0.5 * w * n);
    p.vertices.push_back(L * d - 0.5 * w * n);
    p.vertices.push_back(L * d + 0.5 * w * n);
    p.vertices.push_back(base * d + 0.5 * w * n);
  }
  return p;
}

/// Crude humanoid: torso with two arms and two legs.
inline Polygon figure() {
  return {{{4, 0}, {5, 0}, {5.5, 4}, {6, 0}, {7, 0}, {6.5, 6}, {9.5, 8}, {9, 9}, {6.5, 8}, {6.5, 10},
           {4.5, 10}, {4.5, 8}, {2, 9}, {1.5, 8}, {4.5, 6}},
          {}};
}

/// Random star-shaped polygon around c with `n` vertices and radii in [0.6R, R].
inline Polygon random_blob(std::mt19937_64& rng, int n = 9, Vec2 c = {5, 5}, double R = 4) {
  std::uniform_real_distribution<double> U(0.6, 1.0), J(-0.3, 0.3);
  Polygon p;
  for (int i = 0; i < n; ++i) {
    const double a = 2 * std::numbers::pi * (i + 0.5 + J(rng)) / n;
    const double r = R * U(rng);
    p.vertices.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
  }
  return p;
}

/// Closed circle made of four cubic segments (12 control points).
inline aniclip::SubPath circle(Vec2 c, double r) {
  constexpr double k = 0.5522847498307936;
  aniclip::SubPath s;
  s.closed = true;
  const Vec2 e[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = e[i], b = e[(i + 1) % 4];
    s.points.push_back(c + r * a);
    s.points.push_back(c + r * (a + k * b));
    s.points.push_back(c + r * (b + k * a));
    s.kinds.push_back(aniclip::SegmentKind::Cubic);
  }
  return s;
}

inline aniclip::SubPath polyline(std::vector<Vec2> pts) {
  aniclip::SubPath s;
  s.closed = true;
  s.kinds.assign(pts.size(), aniclip::SegmentKind::Line);
  s.points = std::move(pts);
  return s;
}

/// Two-layer test document: a body disc and a rectangular "arm".
inline aniclip::ClipartDocument two_layer_doc(double size = 64) {
  aniclip::ClipartDocument doc;
  doc.width = doc.height = size;
  const double u = size / 64;
  aniclip::Layer body{"body", 0, {}};
  body.paths.push_back({{circle({32 * u, 32 * u}, 16 * u)}, {0.2, 0.4, 0.8, 1}});
  body.paths.push_back({{circle({32 * u, 32 * u}, 6 * u)}, {0.9, 0.9, 0.1, 1}});
  aniclip::Layer arm{"arm", 1, {}};
  arm.paths.push_back({{polyline({{40 * u, 28 * u}, {58 * u, 28 * u}, {58 * u, 34 * u}, {40 * u, 34 * u}})}, {0.8, 0.1, 0.1, 1}});
  doc.layers = {body, arm};
  return doc;
}

/// Opaque smooth texture on a disc inside a w x h image.
inline aniclip::RasterImage textured_disc(int w, int h, Vec2 c, double r) {
  aniclip::RasterImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      img.at(x, y, 0) = 0.5 + 0.4 * std::sin(px * 0.21) * std::cos(py * 0.17);
      img.at(x, y, 1) = 0.5 + 0.4 * std::cos(px * 0.13 + py * 0.07);
      img.at(x, y, 2) = 0.5 + 0.4 * std::sin(py * 0.19 - px * 0.05);
      img.at(x, y, 3) = std::hypot(px - c.x, py - c.y) <= r ? 1.0 : 0.0;
    }
  return img;
}

/// Opaque texture made of a few random low-frequency waves per channel.
inline aniclip::RasterImage random_texture(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> F(-0.35, 0.35), P(0, 2 * std::numbers::pi), A(0.05, 0.15);
  struct Wave { double fx, fy, ph, amp; };
  std::vector<Wave> waves[3];
  for (auto& ch : waves)
    for (int k = 0; k < 3; ++k) ch.push_back({F(rng), F(rng), P(rng), A(rng)});
  aniclip::RasterImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = 0.5;
        for (const auto& wv : waves[c]) v += wv.amp * std::sin(wv.fx * (x + 0.5) + wv.fy * (y + 0.5) + wv.ph);
        img.at(x, y, c) = std::clamp(v, 0.0, 1.0);
      }
      img.at(x, y, 3) = 1.0;
    }
  return img;
}

/// Opaque smooth texture clipped to a polygon (pixel centres inside are opaque).
inline aniclip::RasterImage textured_shape(int w, int h, const Polygon& shape) {
  aniclip::RasterImage img = textured_disc(w, h, {0, 0}, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y, 3) = shape.contains({x + 0.5, y + 0.5}) ? 1.0 : 0.0;
  return img;
}

/// Starfish scaled into a 256-unit canvas: five limbs around (128, 128).
inline Polygon big_starfish(double scale = 11) {
  Polygon p = starfish(2.4, 9, 2.2);
  for (auto& v : p.vertices) v = Vec2{128, 128} + scale * v;
  return p;
}

inline std::vector<Polygon> rho_fixtures() { return {l_shape(), t_shape(), plus_shape(), starfish(), figure()}; }

}  // namespace fixtures
