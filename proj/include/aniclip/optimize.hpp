#pragma once

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aniclip/animator.hpp"
#include "aniclip/error.hpp"
#include "aniclip/guidance.hpp"
#include "aniclip/hash.hpp"
#include "aniclip/trajectory.hpp"

namespace aniclip {

struct OptimConfig {
  int steps = 500;
  double learning_rate = 0.5;
  double lambda = 25.0;  // skeleton fidelity weight
  int frames = 24;
  bool looping = false;
  bool endpoint_sampling = false;
  int order = 3;
  std::uint64_t seed = 0;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  double grad_clip = 10.0;    // global gradient norm; <= 0 disables
  double init_sigma = 0.01;   // fraction of the canvas diagonal
  DeformerKind deformer = DeformerKind::Arap;
  std::string prompt;
  int threads = 0;            // frame workers; 0 = hardware concurrency (does not affect results)

  void validate() const {
    if (steps < 1) fail(ErrorKind::Config, "steps must be at least 1");
    if (!(learning_rate > 0)) fail(ErrorKind::Config, "learning rate must be positive");
    if (!(lambda >= 0)) fail(ErrorKind::Config, "lambda must be non-negative");
    if (order < 1) fail(ErrorKind::Config, "Bezier order must be at least 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail(ErrorKind::Config, "Adam betas must be in [0, 1)");
    if (!(epsilon > 0)) fail(ErrorKind::Config, "Adam epsilon must be positive");
    if (!(init_sigma >= 0)) fail(ErrorKind::Config, "init sigma must be non-negative");
    if (!std::isfinite(grad_clip)) fail(ErrorKind::Config, "gradient clip must be finite");
    schedule().validate();
  }

  FrameSchedule schedule() const { return {frames, looping, endpoint_sampling}; }
};

inline nlohmann::json to_json(const OptimConfig& c) {
  return {{"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"lambda", c.lambda},
          {"frames", c.frames},
          {"looping", c.looping},
          {"endpoint_sampling", c.endpoint_sampling},
          {"order", c.order},
          {"seed", c.seed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"grad_clip", c.grad_clip},
          {"init_sigma", c.init_sigma},
          {"deformer", to_string(c.deformer)},
          {"prompt", c.prompt}};
}

inline OptimConfig optim_config_from_json(const nlohmann::json& j) {
  OptimConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lambda = j.value("lambda", c.lambda);
    c.frames = j.value("frames", c.frames);
    c.looping = j.value("looping", c.looping);
    c.endpoint_sampling = j.value("endpoint_sampling", c.endpoint_sampling);
    c.order = j.value("order", c.order);
    c.seed = j.value("seed", c.seed);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.init_sigma = j.value("init_sigma", c.init_sigma);
    c.deformer = deformer_from_string(j.value("deformer", std::string("arap")));
    c.prompt = j.value("prompt", c.prompt);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("bad optimizer settings: ") + e.what());
  }
  return c;
}

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0, guidance_loss = 0, fidelity_loss = 0;
  double grad_norm = 0;  // before clipping
  bool clipped = false;
  bool skipped = false;  // non-finite gradient, no update
  int inverted = 0;      // inverted triangles summed over frames
  double seconds = 0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},       {"loss", r.loss},       {"guidance_loss", r.guidance_loss},
                   {"fidelity_loss", r.fidelity_loss}, {"grad_norm", r.grad_norm}, {"clipped", r.clipped},
                   {"skipped", r.skipped}, {"inverted", r.inverted}, {"seconds", r.seconds}};
  if (!std::isfinite(r.grad_norm)) j["grad_norm"] = nullptr;
  return j;
}

inline StepRecord step_record_from_json(const nlohmann::json& j) {
  StepRecord r;
  r.step = j.at("step").get<std::int64_t>();
  r.loss = j.at("loss").get<double>();
  r.guidance_loss = j.at("guidance_loss").get<double>();
  r.fidelity_loss = j.at("fidelity_loss").get<double>();
  r.grad_norm = j.at("grad_norm").is_null() ? NAN : j.at("grad_norm").get<double>();
  r.clipped = j.at("clipped").get<bool>();
  r.skipped = j.at("skipped").get<bool>();
  r.inverted = j.at("inverted").get<int>();
  r.seconds = j.at("seconds").get<double>();
  return r;
}

/// Trajectories per rig part.
using PartTrajectories = std::vector<TrajectorySet>;

struct RunState {
  PartTrajectories trajectories;
  std::vector<double> m, v;  // Adam moments over the free parameters
  std::int64_t step = 0;
  std::int64_t updates = 0;  // applied Adam updates (skipped steps excluded)
  std::string rng;           // serialized generator
  std::vector<StepRecord> history;
};

// Free parameters are c_1..c_k of every trajectory, x then y, in part,
// keypoint, control-point order. c_0 is pinned and never packed.

inline std::size_t free_parameter_count(const PartTrajectories& T) {
  std::size_t n = 0;
  for (const auto& set : T)
    for (const auto& t : set.trajectories) n += 2 * static_cast<std::size_t>(t.order());
  return n;
}

inline std::vector<double> pack_parameters(const PartTrajectories& T) {
  std::vector<double> out;
  for (const auto& set : T)
    for (const auto& t : set.trajectories)
      for (std::size_t k = 1; k < t.control_points.size(); ++k) {
        out.push_back(t.control_points[k].x);
        out.push_back(t.control_points[k].y);
      }
  return out;
}

inline void unpack_parameters(PartTrajectories& T, std::span<const double> p) {
  if (p.size() != free_parameter_count(T)) fail(ErrorKind::State, "parameter vector has the wrong length");
  std::size_t i = 0;
  for (auto& set : T)
    for (auto& t : set.trajectories)
      for (std::size_t k = 1; k < t.control_points.size(); ++k) {
        t.control_points[k] = {p[i], p[i + 1]};
        i += 2;
      }
}

/// Loss terms and their gradients over the packed free parameters.
struct StepGradient {
  double guidance_loss = 0;
  double fidelity_loss = 0;    // unweighted
  double loss = 0;             // guidance + λ fidelity
  std::vector<double> guidance;
  std::vector<double> fidelity;
  std::vector<double> total;
  int inverted = 0;
};

inline std::string serialize_rng(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

inline std::mt19937_64 deserialize_rng(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream s(text);
  s >> rng;
  if (s.fail()) fail(ErrorKind::State, "corrupt generator state");
  return rng;
}

class Optimizer {
 public:
  Optimizer(const Animator& animator, GuidanceProvider& provider, OptimConfig cfg)
      : anim_(&animator), provider_(&provider), cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto [w, h] = provider.resolution();
    if (w != animator.width() || h != animator.height())
      fail(ErrorKind::Config, "animator renders " + std::to_string(animator.width()) + "x" +
                                  std::to_string(animator.height()) + " but the provider expects " + std::to_string(w) +
                                  "x" + std::to_string(h));
  }

  const OptimConfig& config() const { return cfg_; }
  const Animator& animator() const { return *anim_; }

  RunState initial_state() const {
    RunState s;
    std::mt19937_64 rng(cfg_.seed);
    const double sigma = cfg_.init_sigma * anim_->canvas_diagonal();
    for (const auto& kps : anim_->rest_keypoints()) s.trajectories.push_back(init_trajectories(kps, cfg_.order, sigma, rng));
    const std::size_t n = free_parameter_count(s.trajectories);
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.rng = serialize_rng(rng);
    return s;
  }

  /// Keypoints of each unique frame.
  std::vector<PartKeypoints> unique_keypoints(const PartTrajectories& T) const {
    const auto sched = cfg_.schedule();
    std::vector<PartKeypoints> out(sched.unique_frames());
    for (int j = 0; j < sched.unique_frames(); ++j) {
      const double u = sched.parameter(j);
      for (const auto& set : T) {
        std::vector<Vec2> k;
        for (const auto& t : set.trajectories) k.push_back(eval(t, u));
        out[j].push_back(std::move(k));
      }
    }
    return out;
  }

  StepGradient gradient(const PartTrajectories& T, std::int64_t step, std::uint64_t seed) const {
    check_shape(T);
    const auto sched = cfg_.schedule();
    const int K = sched.unique_frames(), N = sched.frame_count;
    const auto kps = unique_keypoints(T);
    std::vector<Animator::Frame> fr(K);
    parallel_for(K, cfg_.threads, [&](int j) { fr[j] = anim_->forward(kps[j]); });

    GuidanceRequest req;
    req.prompt = cfg_.prompt;
    req.step = step;
    req.seed = seed;
    for (int t = 0; t < N; ++t) req.frames.push_back(fr[sched.source(t)].image);
    const auto res = provider_->evaluate(req);
    res.validate_against(req);

    std::vector<FrameBuffer> up(K, FrameBuffer(anim_->width(), anim_->height(), 0.0));
    for (int t = 0; t < N; ++t) {
      auto& u = up[sched.source(t)].pixels;
      const auto& g = res.gradients[t].pixels;
      for (std::size_t i = 0; i < u.size(); ++i) u[i] += g[i];
    }
    std::vector<PartKeypoints> gk(K);
    parallel_for(K, cfg_.threads, [&](int j) { gk[j] = anim_->backward(fr[j], up[j]); });

    StepGradient out;
    out.guidance_loss = res.loss;
    for (const auto& f : fr) out.inverted += f.inverted;
    std::vector<PartKeypoints> fk(K);
    for (int j = 0; j < K; ++j) {
      fk[j].resize(T.size());
      for (std::size_t p = 0; p < T.size(); ++p) fk[j][p].assign(T[p].size(), Vec2{});
    }
    for (std::size_t p = 0; p < T.size(); ++p) {
      std::vector<std::vector<Vec2>> seq(N);
      for (int t = 0; t < N; ++t) seq[t] = kps[sched.source(t)][p];
      const auto fl = fidelity_loss(seq, anim_->rig().parts[p].skeleton);
      out.fidelity_loss += fl.loss;
      for (int t = 0; t < N; ++t)
        for (std::size_t i = 0; i < T[p].size(); ++i) fk[sched.source(t)][p][i] += fl.gradient[t][i];
    }
    out.loss = out.guidance_loss + cfg_.lambda * out.fidelity_loss;
    out.guidance = chain_to_parameters(T, gk);
    out.fidelity = chain_to_parameters(T, fk);
    out.total.resize(out.guidance.size());
    for (std::size_t i = 0; i < out.total.size(); ++i) out.total[i] = out.guidance[i] + cfg_.lambda * out.fidelity[i];
    return out;
  }

  /// One optimization step. A provider error leaves the state untouched.
  StepRecord step(RunState& s) const {
    const auto t0 = std::chrono::steady_clock::now();
    auto rng = deserialize_rng(s.rng);
    const std::uint64_t seed = rng();
    const auto g = gradient(s.trajectories, s.step, seed);

    StepRecord r;
    r.step = s.step;
    r.loss = g.loss;
    r.guidance_loss = g.guidance_loss;
    r.fidelity_loss = g.fidelity_loss;
    r.inverted = g.inverted;
    double sq = 0;
    for (double x : g.total) sq += x * x;
    r.grad_norm = std::sqrt(sq);
    if (!std::isfinite(r.grad_norm) || !std::isfinite(g.loss)) {
      r.skipped = true;
    } else {
      double scale = 1.0;
      if (cfg_.grad_clip > 0 && r.grad_norm > cfg_.grad_clip) {
        scale = cfg_.grad_clip / r.grad_norm;
        r.clipped = true;
      }
      auto theta = pack_parameters(s.trajectories);
      ++s.updates;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.updates));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.updates));
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = scale * g.total[i];
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        theta[i] -= cfg_.learning_rate * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg_.epsilon);
      }
      unpack_parameters(s.trajectories, theta);
    }
    s.rng = serialize_rng(rng);
    ++s.step;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.history.push_back(r);
    return r;
  }

  /// Runs until `until` steps (default: the configured count). When the
  /// provider fails, the last good state is written to `checkpoint` (if set)
  /// before the error propagates.
  void run(RunState& s, std::int64_t until = -1, const std::function<void(const StepRecord&)>& on_step = {},
           const std::filesystem::path& checkpoint = {}) const;

  /// Rendered animation (all N frames) at the animator's resolution.
  std::vector<FrameBuffer> render(const PartTrajectories& T) const {
    const auto sched = cfg_.schedule();
    const auto kps = unique_keypoints(T);
    std::vector<FrameBuffer> uniq(kps.size());
    parallel_for(static_cast<int>(kps.size()), cfg_.threads,
                 [&](int j) { uniq[j] = anim_->forward(kps[j], false).image; });
    std::vector<FrameBuffer> out;
    for (int t = 0; t < sched.frame_count; ++t) out.push_back(uniq[sched.source(t)]);
    return out;
  }

  /// Deformed control points of every frame, [t][site].
  std::vector<std::vector<Vec2>> frame_control_points(const PartTrajectories& T) const {
    const auto sched = cfg_.schedule();
    const auto kps = unique_keypoints(T);
    std::vector<std::vector<Vec2>> uniq;
    for (const auto& k : kps) uniq.push_back(anim_->control_points(anim_->deform(k)));
    std::vector<std::vector<Vec2>> out;
    for (int t = 0; t < sched.frame_count; ++t) out.push_back(uniq[sched.source(t)]);
    return out;
  }

  void check_shape(const PartTrajectories& T) const {
    const auto rest = anim_->rest_keypoints();
    if (T.size() != rest.size()) fail(ErrorKind::State, "trajectory sets do not match the rig parts");
    for (std::size_t p = 0; p < T.size(); ++p) {
      if (T[p].size() != rest[p].size()) fail(ErrorKind::State, "trajectory count does not match the part's keypoints");
      T[p].validate();
      if (T[p].order() != cfg_.order) fail(ErrorKind::State, "trajectory order does not match the configuration");
    }
  }

 private:
  std::vector<double> chain_to_parameters(const PartTrajectories& T, const std::vector<PartKeypoints>& g) const {
    const auto sched = cfg_.schedule();
    std::vector<double> out(free_parameter_count(T), 0.0);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const auto w = bernstein(cfg_.order, sched.parameter(static_cast<int>(j)));
      std::size_t idx = 0;
      for (std::size_t p = 0; p < T.size(); ++p)
        for (std::size_t i = 0; i < T[p].size(); ++i)
          for (int k = 1; k <= cfg_.order; ++k) {
            out[idx++] += w[k] * g[j][p][i].x;
            out[idx++] += w[k] * g[j][p][i].y;
          }
    }
    return out;
  }

  const Animator* anim_;
  GuidanceProvider* provider_;
  OptimConfig cfg_;
};

// Checkpoints ----------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

/// Settings a checkpoint must agree on to be resumed (everything that
/// changes the trajectory of the run except its length).
inline nlohmann::json resume_key(const OptimConfig& c) {
  auto j = to_json(c);
  j.erase("steps");
  return j;
}

inline std::string checkpoint_text(const RunState& s, const OptimConfig& cfg) {
  nlohmann::json payload;
  payload["version"] = kCheckpointVersion;
  payload["config"] = resume_key(cfg);
  payload["step"] = s.step;
  payload["updates"] = s.updates;
  payload["rng"] = s.rng;
  payload["m"] = s.m;
  payload["v"] = s.v;
  payload["trajectories"] = nlohmann::json::array();
  for (const auto& set : s.trajectories) payload["trajectories"].push_back(to_json(set));
  payload["history"] = nlohmann::json::array();
  for (const auto& r : s.history) payload["history"].push_back(to_json(r));
  const std::string body = payload.dump();
  return nlohmann::json{{"payload", payload}, {"sha256", sha256_hex(body)}}.dump() + "\n";
}

inline void save_checkpoint(const std::filesystem::path& path, const RunState& s, const OptimConfig& cfg) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + tmp.string());
    out << checkpoint_text(s, cfg);
    if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Parses and verifies a checkpoint; nothing is returned unless every check
/// passes.
inline RunState parse_checkpoint(const std::string& text, const OptimConfig& cfg) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::State, std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("payload") || !doc.contains("sha256"))
    fail(ErrorKind::State, "checkpoint is missing its payload or checksum");
  const auto& p = doc["payload"];
  if (!p.is_object() || !p.contains("version") || !p["version"].is_number_integer())
    fail(ErrorKind::State, "checkpoint has no version");
  if (p["version"].get<int>() != kCheckpointVersion)
    fail(ErrorKind::State, "checkpoint version " + p["version"].dump() + " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  if (!doc["sha256"].is_string() || sha256_hex(p.dump()) != doc["sha256"].get<std::string>())
    fail(ErrorKind::State, "checkpoint checksum mismatch (file is corrupt)");
  try {
    if (p.at("config") != resume_key(cfg)) fail(ErrorKind::State, "checkpoint was written with different settings");
    RunState s;
    s.step = p.at("step").get<std::int64_t>();
    s.updates = p.at("updates").get<std::int64_t>();
    s.rng = p.at("rng").get<std::string>();
    deserialize_rng(s.rng);
    s.m = p.at("m").get<std::vector<double>>();
    s.v = p.at("v").get<std::vector<double>>();
    for (const auto& t : p.at("trajectories")) s.trajectories.push_back(trajectories_from_json(t));
    for (const auto& r : p.at("history")) s.history.push_back(step_record_from_json(r));
    const std::size_t n = free_parameter_count(s.trajectories);
    if (s.m.size() != n || s.v.size() != n) fail(ErrorKind::State, "checkpoint moments do not match the parameters");
    if (s.step < 0 || s.updates < 0 || s.updates > s.step) fail(ErrorKind::State, "checkpoint step counters are inconsistent");
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::State, std::string("malformed checkpoint: ") + e.what());
  }
}

inline RunState load_checkpoint(const std::filesystem::path& path, const OptimConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read checkpoint " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(text, cfg);
}

inline void Optimizer::run(RunState& s, std::int64_t until, const std::function<void(const StepRecord&)>& on_step,
                           const std::filesystem::path& checkpoint) const {
  if (until < 0) until = cfg_.steps;
  while (s.step < until) {
    try {
      const auto r = step(s);
      if (on_step) on_step(r);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Provider && !checkpoint.empty()) save_checkpoint(checkpoint, s, cfg_);
      throw;
    }
  }
}

}  // namespace aniclip
