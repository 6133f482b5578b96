#pragma once

#include <Eigen/Dense>

#include <array>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "aniclip/skeleton.hpp"
#include "aniclip/triangulate.hpp"

namespace aniclip {

/// Each site expressed in barycentric coordinates of one rest triangle.
struct BarycentricBinding {
  struct Entry {
    int triangle = -1;
    std::array<double, 3> weights{};
    Vec2 rest;  // original site position
  };
  std::vector<Entry> entries;

  /// Position of site `i` on a deformed copy of the mesh. Written as
  /// rest + Σ w (v − v_rest) so the identity deformation is bit-exact.
  Vec2 relocate(std::size_t i, const TriangleMesh& mesh, std::span<const Vec2> deformed) const {
    const Entry& e = entries[i];
    const auto& f = mesh.triangles[e.triangle];
    Vec2 p = e.rest;
    for (int k = 0; k < 3; ++k) p += e.weights[k] * (deformed[f[k]] - mesh.vertices[f[k]]);
    return p;
  }
};

namespace binding_detail {

/// Distance from p to a triangle (0 inside).
inline double distance_to_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const auto w = barycentric(p, a, b, c);
  if (w[0] >= 0 && w[1] >= 0 && w[2] >= 0) return 0.0;
  return std::min({project_to_segment(p, a, b).dist, project_to_segment(p, b, c).dist,
                   project_to_segment(p, c, a).dist});
}

inline Vec2 closest_on_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const auto w = barycentric(p, a, b, c);
  if (w[0] >= 0 && w[1] >= 0 && w[2] >= 0) return p;
  SegmentProjection best = project_to_segment(p, a, b);
  for (auto pr : {project_to_segment(p, b, c), project_to_segment(p, c, a)})
    if (pr.dist < best.dist) best = pr;
  return best.closest;
}

}  // namespace binding_detail

/// Binds each site to the lowest-index triangle containing it (tolerance 1e-9
/// on the weights). Sites up to 1e-6 outside the mesh snap to the nearest
/// triangle; anything farther is an error.
inline BarycentricBinding bind_points(const TriangleMesh& mesh, std::span<const Vec2> sites) {
  using namespace binding_detail;
  BarycentricBinding out;
  out.entries.reserve(sites.size());
  std::string missing;
  for (std::size_t s = 0; s < sites.size(); ++s) {
    const Vec2 p = sites[s];
    BarycentricBinding::Entry e;
    e.rest = p;
    double best = std::numeric_limits<double>::infinity();
    int nearest = -1;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& f = mesh.triangles[t];
      const Vec2 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
      const auto w = barycentric(p, a, b, c);
      if (w[0] >= -1e-9 && w[1] >= -1e-9 && w[2] >= -1e-9) {
        e.triangle = static_cast<int>(t);
        e.weights = w;
        break;
      }
      const double d = distance_to_triangle(p, a, b, c);
      if (d < best) best = d, nearest = static_cast<int>(t);
    }
    if (e.triangle < 0) {
      if (nearest < 0 || best > 1e-6) {
        if (missing.size() < 400)
          missing += " #" + std::to_string(s) + "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
        continue;
      }
      const auto& f = mesh.triangles[nearest];
      const Vec2 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
      e.triangle = nearest;
      e.weights = barycentric(closest_on_triangle(p, a, b, c), a, b, c);
      for (double& w : e.weights) w = std::max(w, 0.0);
      const double sum = e.weights[0] + e.weights[1] + e.weights[2];
      for (double& w : e.weights) w /= sum;
    }
    out.entries.push_back(e);
  }
  if (!missing.empty()) fail(ErrorKind::Rig, "sites outside the mesh:" + missing);
  return out;
}

/// Like bind_points(), but sites off the mesh use the affine extension of their
/// nearest triangle (weights may be negative). Used for Bézier handles that
/// sit outside the filled silhouette.
inline BarycentricBinding bind_points_extrapolated(const TriangleMesh& mesh, std::span<const Vec2> sites) {
  using namespace binding_detail;
  BarycentricBinding out;
  out.entries.reserve(sites.size());
  for (const Vec2 p : sites) {
    BarycentricBinding::Entry e;
    e.rest = p;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
      const auto& f = mesh.triangles[t];
      const Vec2 a = mesh.vertices[f[0]], b = mesh.vertices[f[1]], c = mesh.vertices[f[2]];
      const auto w = barycentric(p, a, b, c);
      if (w[0] >= -1e-9 && w[1] >= -1e-9 && w[2] >= -1e-9) {
        e.triangle = static_cast<int>(t);
        e.weights = w;
        break;
      }
      if (const double d = distance_to_triangle(p, a, b, c); d < best) {
        best = d;
        e.triangle = static_cast<int>(t);
        e.weights = w;
      }
    }
    if (e.triangle < 0) fail(ErrorKind::Rig, "cannot bind to an empty mesh");
    out.entries.push_back(e);
  }
  return out;
}

/// Normalized inverse-squared-distance weights of every mesh vertex over the
/// skeleton keypoints (rows sum to one; a vertex on a keypoint is one-hot).
inline Eigen::MatrixXd lbs_weights(const TriangleMesh& mesh, const Skeleton& skel) {
  const auto m = static_cast<Eigen::Index>(skel.keypoints.size());
  if (m == 0) fail(ErrorKind::Rig, "linear blend weights need at least one keypoint");
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mesh.vertices.size()), m);
  for (Eigen::Index v = 0; v < w.rows(); ++v) {
    const Vec2 p = mesh.vertices[v];
    Eigen::Index hit = -1;
    for (Eigen::Index k = 0; k < m; ++k) {
      const double d2 = norm2(p - skel.keypoints[k]);
      if (d2 <= 1e-24) {
        hit = k;
        break;
      }
      w(v, k) = 1.0 / d2;
    }
    if (hit >= 0) {
      w.row(v).setZero();
      w(v, hit) = 1.0;
    } else {
      w.row(v) /= w.row(v).sum();
    }
  }
  return w;
}

}  // namespace aniclip
