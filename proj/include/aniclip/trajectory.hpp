#pragma once

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/geometry.hpp"

namespace aniclip {

/// Bézier curve over u in [0, 1]; c0 is the keypoint's rest position.
struct BezierTrajectory {
  std::vector<Vec2> control_points;

  int order() const { return static_cast<int>(control_points.size()) - 1; }
  friend bool operator==(const BezierTrajectory&, const BezierTrajectory&) = default;
};

/// One trajectory per skeleton keypoint, all of the same order.
struct TrajectorySet {
  std::vector<BezierTrajectory> trajectories;

  int order() const { return trajectories.empty() ? 0 : trajectories.front().order(); }
  std::size_t size() const { return trajectories.size(); }

  void validate() const {
    for (const auto& t : trajectories) {
      if (t.order() < 1) fail(ErrorKind::Config, "trajectory order must be at least 1");
      if (t.order() != order()) fail(ErrorKind::Config, "trajectories in a set must share one order");
      for (Vec2 p : t.control_points)
        if (!is_finite(p)) fail(ErrorKind::Numeric, "trajectory control point is not finite");
    }
  }
  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

/// Frame timing. Non-looping frames sit at u = t/N; looping animations
/// evaluate the first half at u = t/(N/2) and play it back mirrored.
struct FrameSchedule {
  int frame_count = 24;
  bool looping = false;
  bool endpoint_sampling = false;  // u reaches 1 on the last unique frame

  void validate() const {
    if (frame_count < 2) fail(ErrorKind::Config, "frame count must be at least 2");
    if (looping && frame_count % 2 != 0) fail(ErrorKind::Config, "looping animations need an even frame count");
  }
  int unique_frames() const { return looping ? frame_count / 2 : frame_count; }
  /// Unique frame shown at frame t.
  int source(int t) const { return looping && t >= unique_frames() ? frame_count - 1 - t : t; }
  /// Curve parameter of unique frame j.
  double parameter(int j) const {
    const int K = unique_frames();
    if (endpoint_sampling) return K > 1 ? static_cast<double>(j) / (K - 1) : 0.0;
    return static_cast<double>(j) / K;
  }
};

namespace traj_detail {

inline void check_parameter(double u) {
  if (!(u >= 0.0 && u <= 1.0)) fail(ErrorKind::Config, "curve parameter " + std::to_string(u) + " outside [0, 1]");
}

inline std::vector<Vec2> halve_left(const std::vector<Vec2>& c, std::vector<Vec2>* right) {
  std::vector<Vec2> work = c, left;
  left.reserve(c.size());
  std::vector<Vec2> rt(c.size());
  const std::size_t n = c.size();
  for (std::size_t level = 0; level < n; ++level) {
    left.push_back(work[0]);
    rt[n - 1 - level] = work[n - 1 - level];
    for (std::size_t i = 0; i + 1 < n - level; ++i) work[i] = 0.5 * (work[i] + work[i + 1]);
  }
  if (right) *right = std::move(rt);
  return left;
}

inline double polygon_length(const std::vector<Vec2>& c) {
  double l = 0;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) l += distance(c[i], c[i + 1]);
  return l;
}

inline double adaptive_length(const std::vector<Vec2>& c, double tol, int depth) {
  const double chord = distance(c.front(), c.back());
  const double poly = polygon_length(c);
  const int k = static_cast<int>(c.size()) - 1;
  if (poly - chord < tol || depth >= 40) return (2.0 * chord + (k - 1) * poly) / (k + 1);
  std::vector<Vec2> right;
  const auto left = halve_left(c, &right);
  return adaptive_length(left, 0.5 * tol, depth + 1) + adaptive_length(right, 0.5 * tol, depth + 1);
}

}  // namespace traj_detail

/// Bernstein basis B_{j,k}(u), j = 0..k.
inline std::vector<double> bernstein(int k, double u) {
  std::vector<double> b(static_cast<std::size_t>(k) + 1, 0.0);
  b[0] = 1.0;
  const double v = 1.0 - u;
  for (int d = 1; d <= k; ++d) {
    for (int j = d; j > 0; --j) b[j] = v * b[j] + u * b[j - 1];
    b[0] *= v;
  }
  return b;
}

/// Bernstein-form evaluation, written relative to c0 so that a static
/// trajectory evaluates to its keypoint exactly.
inline Vec2 eval(const BezierTrajectory& t, double u) {
  traj_detail::check_parameter(u);
  const auto& c = t.control_points;
  if (t.order() == 3) {
    const double v = 1.0 - u;
    return c[0] + (3 * v * v * u * (c[1] - c[0]) + 3 * v * u * u * (c[2] - c[0]) + u * u * u * (c[3] - c[0]));
  }
  const auto b = bernstein(t.order(), u);
  Vec2 d{};
  for (std::size_t j = 1; j < b.size(); ++j) d += b[j] * (c[j] - c[0]);
  return c[0] + d;
}

/// Repeated linear interpolation; numerically the most stable evaluation.
inline Vec2 eval_de_casteljau(const BezierTrajectory& t, double u) {
  traj_detail::check_parameter(u);
  std::vector<Vec2> w = t.control_points;
  for (std::size_t n = w.size(); n > 1; --n)
    for (std::size_t i = 0; i + 1 < n; ++i) w[i] = (1.0 - u) * w[i] + u * w[i + 1];
  return w[0];
}

/// ∂eval/∂c_j as scalar weights (each multiplies the 2x2 identity).
inline std::vector<double> eval_gradient(const BezierTrajectory& t, double u) {
  traj_detail::check_parameter(u);
  return bernstein(t.order(), u);
}

/// Trajectories start at the keypoints; each further control point is drawn
/// around the previous one.
inline TrajectorySet init_trajectories(std::span<const Vec2> keypoints, int order, double sigma, std::mt19937_64& rng) {
  if (order < 1) fail(ErrorKind::Config, "trajectory order must be at least 1");
  if (!(sigma >= 0.0)) fail(ErrorKind::Config, "initialization sigma must be non-negative");
  TrajectorySet set;
  std::normal_distribution<double> N(0.0, 1.0);
  for (Vec2 k : keypoints) {
    BezierTrajectory t;
    t.control_points.push_back(k);
    for (int j = 1; j <= order; ++j) {
      const double dx = N(rng), dy = N(rng);
      t.control_points.push_back(t.control_points.back() + sigma * Vec2{dx, dy});
    }
    set.trajectories.push_back(std::move(t));
  }
  return set;
}

inline TrajectorySet init_trajectories(std::span<const Vec2> keypoints, int order, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_trajectories(keypoints, order, sigma, rng);
}

/// Keypoint positions for every frame: result[t][i].
inline std::vector<std::vector<Vec2>> sample_frames(const TrajectorySet& set, const FrameSchedule& sched) {
  sched.validate();
  const int K = sched.unique_frames();
  std::vector<std::vector<Vec2>> unique(K);
  for (int j = 0; j < K; ++j)
    for (const auto& t : set.trajectories) unique[j].push_back(eval(t, sched.parameter(j)));
  std::vector<std::vector<Vec2>> frames(sched.frame_count);
  for (int t = 0; t < sched.frame_count; ++t) frames[t] = unique[sched.source(t)];
  return frames;
}

/// Length by adaptive subdivision until the control polygon and chord agree
/// within the (halved per level) tolerance.
inline double arc_length(const BezierTrajectory& t, double tol = 1e-9) {
  if (!(tol > 0)) fail(ErrorKind::Config, "arc length tolerance must be positive");
  if (t.control_points.size() < 2) return 0.0;
  return traj_detail::adaptive_length(t.control_points, tol, 0);
}

// Serialization --------------------------------------------------------------

inline nlohmann::json to_json(const TrajectorySet& set) {
  nlohmann::json j;
  j["version"] = 1;
  j["order"] = set.order();
  auto& arr = j["trajectories"] = nlohmann::json::array();
  for (const auto& t : set.trajectories) {
    auto pts = nlohmann::json::array();
    for (Vec2 p : t.control_points) pts.push_back({p.x, p.y});
    arr.push_back(std::move(pts));
  }
  return j;
}

inline TrajectorySet trajectories_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) fail(ErrorKind::Parse, "unsupported trajectory dump version");
    TrajectorySet set;
    for (const auto& pts : j.at("trajectories")) {
      BezierTrajectory t;
      for (const auto& p : pts) t.control_points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      set.trajectories.push_back(std::move(t));
    }
    set.validate();
    return set;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed trajectory dump: ") + e.what());
  }
}

}  // namespace aniclip
