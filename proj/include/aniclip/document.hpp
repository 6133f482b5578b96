#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/geometry.hpp"

namespace aniclip {

struct Rgba {
  double r = 0, g = 0, b = 0, a = 1;
  friend bool operator==(const Rgba&, const Rgba&) = default;
};

enum class SegmentKind { Line, Cubic };

/// One M..(Z) run of a path. `points` is the flat control-point list: the
/// start anchor followed, per segment, by its handles and end anchor. The
/// final segment of a closed subpath ends at points[0], so the closing
/// anchor is never stored twice.
struct SubPath {
  std::vector<Vec2> points;
  std::vector<SegmentKind> kinds;
  bool closed = false;

  /// Indices into `points` of segment i's control polygon (2 or 4 entries).
  template <typename Fn>
  void for_each_segment(Fn&& fn) const {
    std::size_t cursor = 0;
    const std::size_t n = points.size();
    for (SegmentKind kind : kinds) {
      const std::size_t span = kind == SegmentKind::Line ? 1 : 3;
      std::array<std::size_t, 4> idx{};
      for (std::size_t k = 0; k <= span; ++k) idx[k] = (cursor + k) % n;
      fn(kind, idx, span + 1);
      cursor += span;
    }
  }
};

struct VectorPath {
  std::vector<SubPath> subpaths;
  Rgba fill;

  std::size_t control_point_count() const {
    std::size_t n = 0;
    for (const auto& s : subpaths) n += s.points.size();
    return n;
  }
  std::vector<Vec2> control_points() const {
    std::vector<Vec2> out;
    out.reserve(control_point_count());
    for (const auto& s : subpaths) out.insert(out.end(), s.points.begin(), s.points.end());
    return out;
  }
};

struct Layer {
  std::string name;
  int z_order = 0;
  std::vector<VectorPath> paths;
};

struct ClipartDocument {
  double width = 0;
  double height = 0;
  std::vector<Layer> layers;

  std::size_t control_point_count() const {
    std::size_t n = 0;
    for (const auto& l : layers)
      for (const auto& p : l.paths) n += p.control_point_count();
    return n;
  }

  /// All control points: layers in document order, then paths, then subpaths.
  std::vector<Vec2> control_points() const {
    std::vector<Vec2> out;
    for (const auto& l : layers)
      for (const auto& p : l.paths)
        for (const auto& s : p.subpaths) out.insert(out.end(), s.points.begin(), s.points.end());
    return out;
  }

  void validate() const {
    if (!(width > 0) || !(height > 0)) fail(ErrorKind::Parse, "document has non-positive canvas size");
    bool any = false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      for (std::size_t j = i + 1; j < layers.size(); ++j)
        if (layers[i].z_order == layers[j].z_order)
          fail(ErrorKind::Parse, "duplicate layer z_order " + std::to_string(layers[i].z_order));
      for (const auto& p : layers[i].paths)
        for (const auto& s : p.subpaths) any = any || s.points.size() >= 2;
    }
    if (!any) fail(ErrorKind::Parse, "document has no geometry");
  }
};

/// Row-major RGBA raster, channels in [0, 1].
struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // 4 * width * height

  RasterImage() = default;
  RasterImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(4) * w * h, 0.0) {}

  double& at(int x, int y, int c) { return pixels[4 * (static_cast<std::size_t>(y) * width + x) + c]; }
  double at(int x, int y, int c) const { return pixels[4 * (static_cast<std::size_t>(y) * width + x) + c]; }
};

/// Outer ring counter-clockwise (positive shoelace area in canvas coordinates),
/// holes clockwise.
struct Polygon {
  std::vector<Vec2> vertices;
  std::vector<std::vector<Vec2>> holes;

  double area() const {
    double a = signed_area(vertices);
    for (const auto& h : holes) a += signed_area(h);
    return a;
  }
  bool contains(Vec2 p) const {
    if (winding_number(vertices, p) == 0) return false;
    for (const auto& h : holes)
      if (winding_number(h, p) != 0) return false;
    return true;
  }
};

}  // namespace aniclip
