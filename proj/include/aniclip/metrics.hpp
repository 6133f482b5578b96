#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/geometry.hpp"
#include "aniclip/trajectory.hpp"

namespace aniclip {

/// Mean arc length of the trajectories.
inline double motion_vibrancy(std::span<const TrajectorySet> sets) {
  double sum = 0;
  std::size_t m = 0;
  for (const auto& set : sets)
    for (const auto& t : set.trajectories) sum += arc_length(t), ++m;
  if (m == 0) fail(ErrorKind::Config, "motion vibrancy of an empty trajectory set");
  return sum / static_cast<double>(m);
}

inline double motion_vibrancy(const TrajectorySet& set) { return motion_vibrancy(std::span<const TrajectorySet>(&set, 1)); }

/// Mean over keypoints of the polyline through their per-frame positions.
inline double pseudo_trajectory_length(std::span<const std::vector<Vec2>> frames) {
  if (frames.size() < 2) fail(ErrorKind::Config, "pseudo-trajectory length needs at least two frames");
  const std::size_t m = frames[0].size();
  if (m == 0) fail(ErrorKind::Config, "pseudo-trajectory length of zero keypoints");
  for (const auto& f : frames)
    if (f.size() != m) fail(ErrorKind::Config, "keypoint count changes between frames");
  double sum = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t t = 0; t + 1 < frames.size(); ++t) sum += distance(frames[t][i], frames[t + 1][i]);
  return sum / static_cast<double>(m);
}

/// Largest distance from a point of `a` to its nearest point of `b`.
inline double directed_hausdorff(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::Config, "Hausdorff distance of an empty point set");
  double worst = 0;
  for (Vec2 p : a) {
    double best = INFINITY;
    for (Vec2 q : b) {
      const double dx = p.x - q.x, dy = p.y - q.y;
      best = std::min(best, dx * dx + dy * dy);
      if (best <= worst) break;  // cannot raise the maximum
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

inline double hausdorff(std::span<const Vec2> a, std::span<const Vec2> b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

/// Mean symmetric Hausdorff distance between consecutive frames.
inline double temporal_consistency(std::span<const std::vector<Vec2>> frames) {
  if (frames.size() < 2) fail(ErrorKind::Config, "temporal consistency needs at least two frames");
  double sum = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) sum += hausdorff(frames[t], frames[t + 1]);
  return sum / static_cast<double>(frames.size() - 1);
}

/// Turning angle over adjacent edge lengths at `p`; 0 when an edge is degenerate.
inline double discrete_curvature(Vec2 prev, Vec2 p, Vec2 next) {
  const Vec2 v1 = prev - p, v2 = p - next;
  const double l1 = norm(v1), l2 = norm(v2);
  if (l1 == 0.0 || l2 == 0.0) return 0.0;
  const double theta = std::atan2(std::abs(cross(v1, v2)), dot(v1, v2));
  return theta / (l1 + l2);
}

/// Mean absolute curvature change against frame 0. `outlines` lists closed
/// rings of point indices; adjacency wraps around each ring.
inline double geometric_deviation(std::span<const std::vector<Vec2>> frames, const std::vector<std::vector<int>>& outlines) {
  if (frames.size() < 2) fail(ErrorKind::Config, "geometric deviation needs at least two frames");
  const std::size_t n = frames[0].size();
  for (const auto& f : frames)
    if (f.size() != n) fail(ErrorKind::Config, "control point count changes between frames");
  std::size_t count = 0;
  for (const auto& ring : outlines)
    for (int i : ring)
      if (i < 0 || static_cast<std::size_t>(i) >= n) fail(ErrorKind::Config, "outline index out of range");
      else ++count;
  if (count == 0) fail(ErrorKind::Config, "geometric deviation over zero control points");
  auto kappa = [&](const std::vector<Vec2>& f, const std::vector<int>& ring, std::size_t k) {
    const std::size_t m = ring.size();
    return discrete_curvature(f[ring[(k + m - 1) % m]], f[ring[k]], f[ring[(k + 1) % m]]);
  };
  double sum = 0;
  for (const auto& ring : outlines)
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const double k0 = kappa(frames[0], ring, k);
      for (std::size_t t = 1; t < frames.size(); ++t) sum += std::abs(k0 - kappa(frames[t], ring, k));
    }
  return sum / (static_cast<double>(frames.size() - 1) * static_cast<double>(count));
}

/// One animation as the metrics see it.
struct AnimationRecord {
  std::string name;
  std::optional<std::vector<TrajectorySet>> trajectories;  // absent for non-parametric motion
  std::vector<std::vector<Vec2>> keypoints;                // [t][i]
  std::vector<std::vector<Vec2>> control_points;           // [t][i]
  std::vector<std::vector<int>> outlines;
};

struct MetricsRow {
  std::string name;
  double motion_vibrancy = 0;  // pseudo-trajectory length when no trajectories
  double temporal_consistency = 0;
  double geometric_deviation = 0;
};

inline MetricsRow evaluate_metrics(const AnimationRecord& r) {
  MetricsRow row;
  row.name = r.name;
  row.motion_vibrancy = r.trajectories ? motion_vibrancy(*r.trajectories) : pseudo_trajectory_length(r.keypoints);
  row.temporal_consistency = temporal_consistency(r.control_points);
  row.geometric_deviation = geometric_deviation(r.control_points, r.outlines);
  return row;
}

inline std::string format_metrics_table(std::span<const MetricsRow> rows) {
  std::size_t w = 3;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(w)) << "run" << std::right << std::setw(14) << "MV (up)" << std::setw(14)
    << "TC (down)" << std::setw(14) << "GD (down)" << "\n";
  s << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    s << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::setw(14) << r.motion_vibrancy
      << std::setw(14) << r.temporal_consistency << std::setw(14) << r.geometric_deviation << "\n";
  return s.str();
}

inline std::string format_metrics_csv(std::span<const MetricsRow> rows) {
  std::ostringstream s;
  s << "run,motion_vibrancy,temporal_consistency,geometric_deviation\n";
  s << std::setprecision(17);
  for (const auto& r : rows) {
    std::string name = r.name;
    if (name.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : name) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      name = q + "\"";
    }
    s << name << "," << r.motion_vibrancy << "," << r.temporal_consistency << "," << r.geometric_deviation << "\n";
  }
  return s.str();
}

}  // namespace aniclip
