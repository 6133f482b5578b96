#pragma once

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/render.hpp"
#include "aniclip/skeleton.hpp"

namespace aniclip {

struct GuidanceRequest {
  std::vector<FrameBuffer> frames;
  std::string prompt;
  std::int64_t step = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (frames.empty()) fail(ErrorKind::Config, "guidance request has no frames");
    for (const auto& f : frames) require_same_shape(f, frames.front(), "guidance request");
  }
};

struct GuidanceResult {
  double loss = 0;                      // reporting only
  std::vector<FrameBuffer> gradients;   // d loss / d pixel, one per frame
  nlohmann::json meta = nlohmann::json::object();

  /// Shape and finiteness check against the request that produced it.
  void validate_against(const GuidanceRequest& req) const {
    if (gradients.size() != req.frames.size())
      fail(ErrorKind::Provider, "guidance returned " + std::to_string(gradients.size()) + " gradient frames for " +
                                    std::to_string(req.frames.size()) + " frames");
    for (std::size_t t = 0; t < gradients.size(); ++t) {
      if (gradients[t].width != req.frames[t].width || gradients[t].height != req.frames[t].height ||
          gradients[t].pixels.size() != req.frames[t].pixels.size())
        fail(ErrorKind::Provider, "guidance gradient shape does not match frame " + std::to_string(t));
      for (double v : gradients[t].pixels)
        if (!std::isfinite(v)) fail(ErrorKind::Provider, "guidance gradient has non-finite values in frame " + std::to_string(t));
    }
    if (!std::isfinite(loss)) fail(ErrorKind::Provider, "guidance loss is not finite");
  }
};

/// Anything that turns rendered frames into per-pixel gradients.
class GuidanceProvider {
 public:
  virtual ~GuidanceProvider() = default;
  virtual GuidanceResult evaluate(const GuidanceRequest& req) = 0;
  /// Frame size the provider expects (width, height).
  virtual std::pair<int, int> resolution() const = 0;
  /// Settings echoed into the run log.
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

/// Mean squared pixel difference to fixed targets.
inline GuidanceResult mock_target_guidance(std::span<const FrameBuffer> frames, std::span<const FrameBuffer> targets) {
  if (frames.size() != targets.size())
    fail(ErrorKind::Config, "mock guidance: " + std::to_string(frames.size()) + " frames vs " +
                                std::to_string(targets.size()) + " targets");
  std::size_t count = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    require_same_shape(frames[t], targets[t], "mock guidance");
    count += frames[t].pixels.size();
  }
  GuidanceResult r;
  r.meta = {{"provider", "mock"}};
  if (count == 0) return r;
  double sum = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    FrameBuffer g(frames[t].width, frames[t].height, 0.0);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
      const double d = frames[t].pixels[i] - targets[t].pixels[i];
      sum += d * d;
      g.pixels[i] = 2.0 * d / static_cast<double>(count);
    }
    r.gradients.push_back(std::move(g));
  }
  r.loss = sum / static_cast<double>(count);
  return r;
}

/// Mock provider: `weight` times the mean squared difference. The weight
/// sets how strongly the mock pulls against the fidelity term.
class MockTargetGuidance final : public GuidanceProvider {
 public:
  explicit MockTargetGuidance(std::vector<FrameBuffer> targets, double weight = 1.0)
      : targets_(std::move(targets)), weight_(weight) {
    if (targets_.empty()) fail(ErrorKind::Config, "mock guidance needs target frames");
    if (!(weight_ > 0) || !std::isfinite(weight_)) fail(ErrorKind::Config, "mock guidance weight must be positive");
  }
  GuidanceResult evaluate(const GuidanceRequest& req) override {
    auto r = mock_target_guidance(req.frames, targets_);
    if (weight_ != 1.0) {
      r.loss *= weight_;
      for (auto& g : r.gradients)
        for (double& v : g.pixels) v *= weight_;
    }
    return r;
  }
  std::pair<int, int> resolution() const override { return {targets_.front().width, targets_.front().height}; }
  nlohmann::json describe() const override {
    return {{"provider", "mock"},
            {"frames", targets_.size()},
            {"weight", weight_},
            {"resolution", {resolution().first, resolution().second}}};
  }
  const std::vector<FrameBuffer>& targets() const { return targets_; }

 private:
  std::vector<FrameBuffer> targets_;
  double weight_;
};

/// Zero gradient everywhere; for rigging and pipeline checks.
class NullGuidance final : public GuidanceProvider {
 public:
  NullGuidance(int width = 256, int height = 256) : w_(width), h_(height) {}
  GuidanceResult evaluate(const GuidanceRequest& req) override {
    GuidanceResult r;
    for (const auto& f : req.frames) r.gradients.emplace_back(f.width, f.height, 0.0);
    r.meta = {{"provider", "null"}};
    return r;
  }
  std::pair<int, int> resolution() const override { return {w_, h_}; }
  nlohmann::json describe() const override { return {{"provider", "null"}}; }

 private:
  int w_, h_;
};

// Skeleton fidelity ------------------------------------------------------------

struct FidelityResult {
  double loss = 0;
  std::vector<std::vector<Vec2>> gradient;  // [t][i]; frame 0 is the reference and gets zeros
};

/// Mean squared bone-length change against frame 0, over frames 1..N−1 and
/// all bones. Bones of zero length contribute no gradient.
inline FidelityResult fidelity_loss(std::span<const std::vector<Vec2>> frames, const Skeleton& skel) {
  FidelityResult r;
  r.gradient.assign(frames.size(), {});
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].size() != skel.keypoints.size())
      fail(ErrorKind::State, "fidelity loss: frame " + std::to_string(t) + " has " + std::to_string(frames[t].size()) +
                                 " keypoints, skeleton has " + std::to_string(skel.keypoints.size()));
    r.gradient[t].assign(frames[t].size(), Vec2{});
  }
  if (frames.size() < 2 || skel.bones.empty()) return r;
  const double scale = 1.0 / (static_cast<double>(frames.size() - 1) * static_cast<double>(skel.bones.size()));
  for (std::size_t t = 1; t < frames.size(); ++t)
    for (auto [i, j] : skel.bones) {
      const double rest = distance(frames[0][i], frames[0][j]);
      const Vec2 d = frames[t][i] - frames[t][j];
      const double len = norm(d);
      const double dev = len - rest;
      r.loss += scale * dev * dev;
      if (len > 0.0) {
        const Vec2 g = (2.0 * scale * dev / len) * d;
        r.gradient[t][i] += g;
        r.gradient[t][j] -= g;
      }
    }
  return r;
}

}  // namespace aniclip
