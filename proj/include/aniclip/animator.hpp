#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "aniclip/arap.hpp"
#include "aniclip/binding.hpp"
#include "aniclip/document.hpp"
#include "aniclip/error.hpp"
#include "aniclip/render.hpp"
#include "aniclip/rig.hpp"
#include "aniclip/trajectory.hpp"

namespace aniclip {

/// The artwork being animated.
using Subject = std::variant<ClipartDocument, RasterImage>;

inline bool is_bitmap(const Subject& s) { return std::holds_alternative<RasterImage>(s); }

enum class DeformerKind { Arap, LinearBlend };

inline std::string to_string(DeformerKind k) { return k == DeformerKind::Arap ? "arap" : "lbs"; }

inline DeformerKind deformer_from_string(const std::string& s) {
  if (s == "arap") return DeformerKind::Arap;
  if (s == "lbs") return DeformerKind::LinearBlend;
  fail(ErrorKind::Config, "unknown deformer '" + s + "' (expected arap or lbs)");
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// handled by exactly one worker, so results do not depend on scheduling.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Keypoint positions per rig part: [part][keypoint].
using PartKeypoints = std::vector<std::vector<Vec2>>;

/// Everything about one subject that stays fixed while its keypoints move:
/// deformers with their cached factorizations and the renderer state for
/// one output resolution.
class Animator {
 public:
  struct PartPose {
    std::vector<Vec2> targets;
    std::vector<Vec2> vertices;
    std::optional<ArapSolution> arap;
  };

  struct Frame {
    std::vector<PartPose> parts;
    FrameBuffer image;
    int inverted = 0;
    VectorTape vector_tape;
    BitmapTape bitmap_tape;
  };

  Animator(Subject subject, Rig rig, int width, int height, DeformerKind deformer = DeformerKind::Arap)
      : subject_(std::move(subject)), rig_(std::move(rig)), width_(width), height_(height), deformer_(deformer) {
    if (width <= 0 || height <= 0) fail(ErrorKind::Config, "render resolution must be positive");
    if (rig_.parts.empty()) fail(ErrorKind::Rig, "rig has no parts");
    if (is_bitmap(subject_) != rig_.bitmap) fail(ErrorKind::Rig, "rig kind does not match the input (vector vs bitmap)");
    if (const auto* doc = std::get_if<ClipartDocument>(&subject_)) {
      if (doc->control_point_count() != rig_.site_count)
        fail(ErrorKind::Rig, "rig binds " + std::to_string(rig_.site_count) + " control points, document has " +
                                 std::to_string(doc->control_point_count()));
      scene_ = prepare_scene(*doc, width, height);
      rest_points_ = doc->control_points();
    } else {
      const auto& img = std::get<RasterImage>(subject_);
      if (rig_.parts.size() != 1) fail(ErrorKind::Rig, "bitmap rigs have exactly one part");
      if (img.width != rig_.width || img.height != rig_.height) fail(ErrorKind::Rig, "rig canvas does not match the image");
      source_.emplace(img);
    }
    for (const auto& p : rig_.parts) {
      Deformer d;
      const auto& kv = p.mesh.keypoint_vertex;
      if (kv.empty()) fail(ErrorKind::Rig, "part '" + p.name + "' has no keypoints");
      if (p.sites.size() != p.binding.entries.size()) fail(ErrorKind::Rig, "part '" + p.name + "' binding is incomplete");
      if (kv.size() >= 2 && deformer_ == DeformerKind::Arap) {
        d.arap = std::make_shared<ArapFactorization>(p.mesh, kv);
      } else if (kv.size() >= 2) {
        d.lbs = lbs_weights(p.mesh, p.skeleton);
      }
      for (int v : kv) d.rest.push_back(p.mesh.vertices[v]);
      deformers_.push_back(std::move(d));
    }
  }

  const Rig& rig() const { return rig_; }
  const Subject& subject() const { return subject_; }
  int width() const { return width_; }
  int height() const { return height_; }
  DeformerKind deformer() const { return deformer_; }
  double canvas_diagonal() const { return std::hypot(rig_.width, rig_.height); }

  PartKeypoints rest_keypoints() const {
    PartKeypoints out;
    for (const auto& d : deformers_) out.push_back(d.rest);
    return out;
  }

  /// Mesh vertices of every part for the given keypoint targets.
  std::vector<PartPose> deform(const PartKeypoints& kps) const {
    if (kps.size() != rig_.parts.size()) fail(ErrorKind::State, "keypoints given for the wrong number of parts");
    std::vector<PartPose> out(kps.size());
    for (std::size_t p = 0; p < kps.size(); ++p) {
      const auto& d = deformers_[p];
      const auto& mesh = rig_.parts[p].mesh;
      if (kps[p].size() != d.rest.size()) fail(ErrorKind::State, "part '" + rig_.parts[p].name + "' keypoint count mismatch");
      auto& pose = out[p];
      pose.targets = kps[p];
      if (d.arap) {
        pose.arap = d.arap->solve(kps[p]);
        pose.vertices = pose.arap->vertices;
      } else if (d.rest.size() >= 2) {
        pose.vertices = lbs_solve(mesh, d.lbs, d.rest, kps[p]);
      } else {
        const Vec2 shift = kps[p][0] - d.rest[0];
        pose.vertices = mesh.vertices;
        for (auto& v : pose.vertices) v += shift;
      }
    }
    return out;
  }

  /// Deformed control points (vector) or outline sites (bitmap), in the
  /// global site order.
  std::vector<Vec2> control_points(const std::vector<PartPose>& pose) const {
    std::vector<Vec2> cps = rig_.bitmap ? std::vector<Vec2>(rig_.site_count) : rest_points_;
    for (std::size_t p = 0; p < pose.size(); ++p) {
      const auto& part = rig_.parts[p];
      for (std::size_t i = 0; i < part.sites.size(); ++i)
        cps[part.sites[i]] = part.binding.relocate(i, part.mesh, pose[p].vertices);
    }
    return cps;
  }

  Frame forward(const PartKeypoints& kps, bool record = true) const {
    Frame f;
    f.parts = deform(kps);
    if (rig_.bitmap) {
      auto r = render_bitmap(*source_, rig_.parts[0].mesh, f.parts[0].vertices, width_, height_,
                             record ? &f.bitmap_tape : nullptr);
      f.image = std::move(r.frame);
      f.inverted = static_cast<int>(r.inverted.size());
    } else {
      for (std::size_t p = 0; p < f.parts.size(); ++p)
        f.inverted += static_cast<int>(inverted_triangles(rig_.parts[p].mesh, f.parts[p].vertices).size());
      f.image = render_scene(scene_, control_points(f.parts), record ? &f.vector_tape : nullptr);
    }
    return f;
  }

  /// Chains a pixel gradient back to each part's keypoints.
  PartKeypoints backward(const Frame& f, const FrameBuffer& upstream) const {
    require_same_shape(upstream, f.image, "animator backward");
    std::vector<std::vector<Vec2>> vertex_grad(f.parts.size());
    if (rig_.bitmap) {
      vertex_grad[0] = bitmap_backward(rig_.parts[0].mesh, f.bitmap_tape, upstream);
    } else {
      const auto gcp = scene_backward(scene_, f.vector_tape, upstream);
      for (std::size_t p = 0; p < f.parts.size(); ++p) {
        const auto& part = rig_.parts[p];
        std::vector<Vec2> g(part.sites.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = gcp[part.sites[i]];
        vertex_grad[p] = relocate_backward(part.binding, part.mesh, g);
      }
    }
    PartKeypoints out(f.parts.size());
    for (std::size_t p = 0; p < f.parts.size(); ++p) {
      const auto& d = deformers_[p];
      if (d.arap) {
        out[p] = d.arap->backward(*f.parts[p].arap, f.parts[p].targets, vertex_grad[p]);
      } else if (d.rest.size() >= 2) {
        out[p] = lbs_backward(d.lbs, vertex_grad[p]);
      } else {
        Vec2 s{};
        for (Vec2 g : vertex_grad[p]) s += g;
        out[p] = {s};
      }
    }
    return out;
  }

 private:
  struct Deformer {
    std::shared_ptr<const ArapFactorization> arap;
    Eigen::MatrixXd lbs;
    std::vector<Vec2> rest;
  };

  Subject subject_;
  Rig rig_;
  int width_, height_;
  DeformerKind deformer_;
  VectorScene scene_;
  std::vector<Vec2> rest_points_;
  std::optional<BitmapSource> source_;
  std::vector<Deformer> deformers_;
};

}  // namespace aniclip
