#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "aniclip/aniclip.hpp"

using namespace aniclip;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Provider: return 3;
    case ErrorKind::Rig:
    case ErrorKind::Numeric: return 4;
    default: return 2;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Flags shared by several commands; unset ones leave the config untouched.
struct Overrides {
  std::optional<double> rho, quality, lr, lambda;
  std::optional<int> steps, frames, order;
  std::optional<std::uint64_t> seed;
  bool loop = false;
  std::string provider, endpoint, layers, keypoints, config;

  void apply(AppConfig& c) const {
    if (!config.empty()) c = apply_config(c, read_toml(config));
    if (rho) c.rig.rho = *rho;
    if (quality) c.rig.min_angle = *quality;
    if (lr) c.optimize.learning_rate = *lr;
    if (lambda) c.optimize.lambda = *lambda;
    if (steps) c.optimize.steps = *steps;
    if (frames) c.optimize.frames = *frames;
    if (order) c.optimize.order = *order;
    if (seed) c.optimize.seed = *seed;
    if (loop) c.optimize.looping = true;
    if (!provider.empty()) c.provider.kind = provider;
    if (const char* env = std::getenv(kEndpointEnv); env && *env) c.provider.remote.endpoint = env;
    if (!endpoint.empty()) c.provider.remote.endpoint = endpoint;
    if (!layers.empty()) c.layers = read_layer_groups(layers);
    if (!keypoints.empty()) c.keypoints = keypoints;
    c.validate();
  }
};

void add_rig_flags(CLI::App* app, Overrides& o) {
  app->add_option("--rho", o.rho, "skeleton simplification threshold");
  app->add_option("--quality", o.quality, "minimum triangle angle in degrees");
  app->add_option("--keypoints", o.keypoints, "keypoint override file (JSON)");
  app->add_option("--layers", o.layers, "layer group file");
}

void add_optimize_flags(CLI::App* app, Overrides& o) {
  app->add_option("--steps", o.steps, "optimization steps");
  app->add_option("--lr", o.lr, "Adam learning rate");
  app->add_option("--lambda", o.lambda, "skeleton fidelity weight");
  app->add_option("--frames", o.frames, "frame count N");
  app->add_option("--order", o.order, "Bezier trajectory order");
  app->add_flag("--loop", o.loop, "palindromic looping animation");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--provider", o.provider, "guidance provider")->check(CLI::IsMember({"mock", "remote"}));
  app->add_option("--endpoint", o.endpoint, std::string("guidance service URL (also ") + kEndpointEnv + ")");
}

int cmd_rig(const fs::path& input, const fs::path& out, bool force, const Overrides& o) {
  AppConfig cfg;
  o.apply(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Subject subject = load_subject(input);
  const Rig rig = build_rig(subject, cfg);
  prepare_output_dir(out, force);
  write_rig_dir(out, rig, input, cfg);
  for (const auto& p : rig.parts) {
    std::cout << "part " << p.name << ": " << p.skeleton.keypoints.size() << " keypoints, " << p.skeleton.bones.size()
              << " bones, " << p.mesh.vertices.size() << " vertices, " << p.mesh.triangles.size() << " triangles\n";
    for (const auto& w : p.warnings) std::cerr << "warning: " << p.name << ": " << w << "\n";
  }
  std::cout << "rig written to " << out.string() << " in " << seconds_since(t0) << " s\n";
  return 0;
}

PartTrajectories load_target_trajectories(const fs::path& p) {
  return trajectories_from_run_json(read_json(fs::is_directory(p) ? p / "trajectories.json" : p));
}

struct Session {
  LoadedRig rig;
  AppConfig cfg;
  std::unique_ptr<GuidanceProvider> provider;
  std::unique_ptr<Animator> animator;
  std::unique_ptr<Optimizer> optimizer;
};

/// Rig settings recorded in the rig directory become the config baseline.
AppConfig config_from_rig(const LoadedRig& r) {
  AppConfig c;
  if (!r.settings.empty()) {
    auto s = r.settings;
    s.erase("keypoints");
    c = apply_config(c, {{"rig", s}});
  }
  c.layers = r.groups;
  return c;
}

void open_session(Session& s, const fs::path& rig_dir, const Overrides& o) {
  s.rig = load_rig_dir(rig_dir);
  s.cfg = config_from_rig(s.rig);
  const auto groups_before = s.cfg.layers;
  o.apply(s.cfg);
  if (s.cfg.layers != groups_before) {
    std::cerr << "layer groups differ from the rig; re-rigging " << s.rig.input.string() << "\n";
    s.rig.rig = build_rig(s.rig.subject, s.cfg);
  }
  if (s.cfg.provider.kind == "remote") {
    s.provider = std::make_unique<RemoteGuidance>(s.cfg.provider.remote);
    const auto& health = static_cast<RemoteGuidance&>(*s.provider).health();
    if (health.contains("guidance_scale") && health["guidance_scale"].is_number() &&
        health["guidance_scale"].get<double>() != s.cfg.provider.guidance_scale)
      std::cerr << "warning: service runs with guidance scale " << health["guidance_scale"] << ", config says "
                << s.cfg.provider.guidance_scale << "\n";
  }
  const int w = s.provider ? s.provider->resolution().first : s.cfg.render.width;
  const int h = s.provider ? s.provider->resolution().second : s.cfg.render.height;
  s.animator = std::make_unique<Animator>(s.rig.subject, s.rig.rig, w, h, s.cfg.optimize.deformer);
  if (!s.provider) {
    NullGuidance null(w, h);
    Optimizer ref(*s.animator, null, s.cfg.optimize);
    PartTrajectories target;
    if (s.cfg.provider.mock_targets.empty()) {
      for (const auto& kps : s.animator->rest_keypoints()) target.push_back(init_trajectories(kps, s.cfg.optimize.order, 0.0, 0));
    } else {
      target = load_target_trajectories(s.cfg.provider.mock_targets);
    }
    s.provider = std::make_unique<MockTargetGuidance>(ref.render(target), s.cfg.provider.mock_weight);
  }
  s.optimizer = std::make_unique<Optimizer>(*s.animator, *s.provider, s.cfg.optimize);
}

int cmd_animate(const fs::path& rig_dir, const std::string& prompt, const fs::path& out, bool force, bool resume,
                int checkpoint_every, const Overrides& o, const std::vector<std::string>& argv) {
  const auto t_start = std::chrono::steady_clock::now();
  Session s;
  Overrides ov = o;
  open_session(s, rig_dir, ov);
  if (!prompt.empty()) {
    s.cfg.optimize.prompt = prompt;
    s.optimizer = std::make_unique<Optimizer>(*s.animator, *s.provider, s.cfg.optimize);
  }
  const auto& opt = *s.optimizer;
  const fs::path ckpt = out / "checkpoint.json";

  RunState state;
  if (resume) {
    if (!fs::exists(ckpt)) fail(ErrorKind::Config, "nothing to resume: " + ckpt.string() + " does not exist");
    state = load_checkpoint(ckpt, s.cfg.optimize);
    opt.check_shape(state.trajectories);
    std::cout << "resuming at step " << state.step << "\n";
  } else {
    prepare_output_dir(out, force);
    state = opt.initial_state();
  }
  write_json(out / "config.json", to_json(s.cfg));
  if (!resume) {
    fs::create_directories(out / "rig");
    for (const char* f : {"rig.json", "skeleton.json", "mesh.json", "binding.json", "preview.svg"})
      if (fs::exists(rig_dir / f)) fs::copy_file(rig_dir / f, out / "rig" / f, fs::copy_options::overwrite_existing);
    fs::copy_file(s.rig.input, out / "rig" / s.rig.input.filename(), fs::copy_options::overwrite_existing);
    if (s.cfg.layers != s.rig.groups) {
      write_rig_dir(out / "rig", s.rig.rig, s.rig.input, s.cfg);
    }
  }

  std::ofstream log(out / "log.jsonl", std::ios::app);
  if (!log) fail(ErrorKind::Io, "cannot write " + (out / "log.jsonl").string());
  log << nlohmann::json{{"event", "start"}, {"step", state.step}, {"provider", s.provider->describe()}}.dump() << "\n";

  const auto t_opt = std::chrono::steady_clock::now();
  const int total = s.cfg.optimize.steps;
  try {
    opt.run(state, total, [&](const StepRecord& r) {
      auto j = to_json(r);
      if (r.clipped) j["event"] = "clipped";
      if (r.skipped) j["event"] = "skipped_non_finite";
      log << j.dump() << "\n";
      log.flush();
      if (r.skipped) std::cerr << "step " << r.step << ": non-finite gradient, step skipped\n";
      if ((r.step + 1) % 25 == 0 || r.step + 1 == total)
        std::cout << "step " << r.step + 1 << "/" << total << "  loss " << r.loss << "  |g| " << r.grad_norm << "\n";
      if (checkpoint_every > 0 && (r.step + 1) % checkpoint_every == 0) save_checkpoint(ckpt, state, s.cfg.optimize);
    }, ckpt);
  } catch (const Error& e) {
    log << nlohmann::json{{"event", "abort"}, {"step", state.step}, {"error", e.what()}}.dump() << "\n";
    if (e.kind() == ErrorKind::Provider) std::cerr << "provider failed; state saved to " << ckpt.string() << " (use --resume)\n";
    throw;
  }
  const double optimize_seconds = seconds_since(t_opt);
  save_checkpoint(ckpt, state, s.cfg.optimize);

  const auto t_export = std::chrono::steady_clock::now();
  const int ew = s.cfg.render.export_width ? s.cfg.render.export_width : s.animator->width();
  const int eh = s.cfg.render.export_height ? s.cfg.render.export_height : s.animator->height();
  std::unique_ptr<Animator> export_anim;
  const Animator* ea = s.animator.get();
  if (ew != ea->width() || eh != ea->height()) {
    export_anim = std::make_unique<Animator>(s.rig.subject, s.rig.rig, ew, eh, s.cfg.optimize.deformer);
    ea = export_anim.get();
  }
  NullGuidance null(ew, eh);
  Optimizer exporter(*ea, null, s.cfg.optimize);
  export_animation(exporter, state.trajectories, out, s.cfg.render.frame_delay);
  write_json(out / "trajectories.json", trajectories_json(s.rig.rig, state.trajectories));
  write_json(out / "geometry.json", geometry_json(exporter, state.trajectories));
  const double export_seconds = seconds_since(t_export);

  nlohmann::json manifest;
  manifest["tool"] = "aniclip";
  manifest["version"] = ANICLIP_VERSION;
  manifest["command"] = argv;
  manifest["seed"] = s.cfg.optimize.seed;
  manifest["config"] = to_json(s.cfg);
  manifest["provider"] = s.provider->describe();
  manifest["inputs"] = inventory(out / "rig");
  manifest["steps"] = state.step;
  manifest["initial_loss"] = state.history.empty() ? 0.0 : state.history.front().loss;
  manifest["final_loss"] = state.history.empty() ? 0.0 : state.history.back().loss;
  manifest["timings"] = {{"optimize_seconds", optimize_seconds},
                         {"export_seconds", export_seconds},
                         {"total_seconds", seconds_since(t_start)}};
  manifest["outputs"] = inventory(out, {"manifest.json", "log.jsonl", "checkpoint.json"});
  write_json(out / "manifest.json", manifest);
  std::cout << "run written to " << out.string() << " (final loss " << manifest["final_loss"].get<double>() << ")\n";
  return 0;
}

int cmd_render(const fs::path& run, fs::path out, int width, int height, bool force) {
  const auto cfg_json = read_json(run / "config.json");
  AppConfig cfg = apply_config(AppConfig{}, [&] {
    auto j = cfg_json;
    j["rig"].erase("keypoints");
    return j;
  }());
  auto loaded = load_rig_dir(run / "rig");
  if (width <= 0) width = cfg.render.export_width ? cfg.render.export_width : cfg.render.width;
  if (height <= 0) height = cfg.render.export_height ? cfg.render.export_height : cfg.render.height;
  if (out.empty()) out = run / ("render_" + std::to_string(width) + "x" + std::to_string(height));
  const auto T = trajectories_from_run_json(read_json(run / "trajectories.json"));
  Animator anim(loaded.subject, loaded.rig, width, height, cfg.optimize.deformer);
  NullGuidance null(width, height);
  Optimizer opt(anim, null, cfg.optimize);
  opt.check_shape(T);
  prepare_output_dir(out, force);
  const auto files = export_animation(opt, T, out, cfg.render.frame_delay);
  std::cout << files.size() << " files written to " << out.string() << "\n";
  return 0;
}

int cmd_metrics(const std::vector<fs::path>& runs, const fs::path& csv) {
  std::vector<MetricsRow> rows;
  for (const auto& r : runs) {
    try {
      rows.push_back(evaluate_metrics(load_animation_record(r)));
    } catch (const Error& e) {
      std::cerr << "skipping " << r.string() << ": " << e.what() << "\n";
    }
  }
  if (rows.empty()) fail(ErrorKind::Config, "no run had usable artifacts");
  std::cout << format_metrics_table(rows);
  if (!csv.empty()) write_text(csv, format_metrics_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aniclip: animate clipart along optimized keypoint trajectories"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ANICLIP_VERSION);
  Overrides o;
  app.add_option("--config", o.config, "TOML-style config file");

  fs::path input, out, rig_dir, csv;
  bool force = false, resume = false;
  std::string prompt;
  int checkpoint_every = 50, width = 0, height = 0;
  std::vector<fs::path> runs;

  auto* rig = app.add_subcommand("rig", "build keypoints, skeleton, mesh and binding for an input");
  rig->add_option("input", input, "SVG or PNG clipart")->required()->check(CLI::ExistingFile);
  rig->add_option("--out", out, "rig directory")->required();
  rig->add_flag("--force", force, "overwrite an existing directory");
  add_rig_flags(rig, o);

  auto* animate = app.add_subcommand("animate", "optimize trajectories and export the animation");
  animate->add_option("rig", rig_dir, "rig directory")->required()->check(CLI::ExistingDirectory);
  animate->add_option("--prompt", prompt, "text prompt for the guidance service");
  animate->add_option("--out", out, "run directory")->required();
  animate->add_flag("--force", force, "overwrite an existing run directory");
  animate->add_flag("--resume", resume, "continue from the run directory's checkpoint");
  animate->add_option("--checkpoint-every", checkpoint_every, "steps between checkpoints (0 = only at the end)");
  add_optimize_flags(animate, o);
  animate->add_option("--layers", o.layers, "layer group file");
  animate->add_option("--keypoints", o.keypoints, "keypoint override file (used when re-rigging)");

  auto* render = app.add_subcommand("render", "re-render a run at another resolution");
  render->add_option("run", rig_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  render->add_option("--width", width, "frame width");
  render->add_option("--height", height, "frame height");
  render->add_option("--out", out, "output directory (default: inside the run)");
  render->add_flag("--force", force, "overwrite an existing directory");

  auto* metrics = app.add_subcommand("metrics", "motion vibrancy, temporal consistency and geometric deviation");
  metrics->add_option("runs", runs, "run directories")->required();
  metrics->add_option("--csv", csv, "also write the table as CSV");

  auto* service = app.add_subcommand("service-config", "print the settings the guidance service should use");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::string> args(argv, argv + argc);
  try {
    if (*rig) return cmd_rig(input, out, force, o);
    if (*animate) return cmd_animate(rig_dir, prompt, out, force, resume, checkpoint_every, o, args);
    if (*render) return cmd_render(rig_dir, out, width, height, force);
    if (*metrics) return cmd_metrics(runs, csv);
    if (*service) {
      AppConfig cfg;
      o.apply(cfg);
      std::cout << service_config(cfg).dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
