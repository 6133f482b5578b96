#pragma once

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "aniclip/animator.hpp"
#include "aniclip/config.hpp"
#include "aniclip/error.hpp"
#include "aniclip/hash.hpp"
#include "aniclip/image_io.hpp"
#include "aniclip/metrics.hpp"
#include "aniclip/optimize.hpp"
#include "aniclip/rig.hpp"
#include "aniclip/svg.hpp"

#ifndef ANICLIP_VERSION
#define ANICLIP_VERSION "0.0.0"
#endif

namespace aniclip {

namespace fs = std::filesystem;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Creates an output directory. Existing non-empty directories are only
/// reused with `force`, in which case their previous contents are removed.
inline void prepare_output_dir(const fs::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) fail(ErrorKind::Config, dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) fail(ErrorKind::Config, dir.string() + " already exists; pass --force to overwrite it");
      for (const auto& e : fs::directory_iterator(dir)) fs::remove_all(e.path(), ec);
      if (ec) fail(ErrorKind::Io, "cannot clear " + dir.string() + ": " + ec.message());
    }
  }
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

// Subjects ---------------------------------------------------------------------

inline Subject load_subject(const fs::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".svg") return parse_svg(read_text(path));
  if (ext == ".png") return read_png(path);
  fail(ErrorKind::Config, "unsupported input " + path.string() + " (expected .svg or .png)");
}

/// Document with every control point replaced, in control_points() order.
inline ClipartDocument with_control_points(ClipartDocument doc, std::span<const Vec2> cps) {
  if (cps.size() != doc.control_point_count()) fail(ErrorKind::State, "control point count does not match the document");
  std::size_t k = 0;
  for (auto& l : doc.layers)
    for (auto& p : l.paths)
      for (auto& s : p.subpaths)
        for (auto& pt : s.points) pt = cps[k++];
  return doc;
}

// Rig directories ----------------------------------------------------------------
//
// rig.json (parts, canvas, outlines), skeleton.json, mesh.json, binding.json,
// preview.svg and a copy of the input (input.svg / input.png).

inline void write_rig_dir(const fs::path& dir, const Rig& rig, const fs::path& input, const AppConfig& cfg) {
  auto all = to_json(rig);
  nlohmann::json sk, mesh, bind;
  for (auto k : {&sk, &mesh, &bind}) (*k)["parts"] = nlohmann::json::array();
  for (auto& p : all["parts"]) {
    sk["parts"].push_back({{"name", p["name"]}, {"keypoints", p["skeleton"]["keypoints"]}, {"bones", p["skeleton"]["bones"]}});
    mesh["parts"].push_back({{"name", p["name"]}, {"mesh", p["mesh"]}});
    bind["parts"].push_back({{"name", p["name"]}, {"sites", p["sites"]}, {"entries", p["binding"]}});
    p.erase("skeleton");
    p.erase("mesh");
    p.erase("binding");
    p.erase("sites");
  }
  all["input"] = "input" + input.extension().string();
  all["settings"] = to_json(cfg)["rig"];
  all["layer_groups"] = cfg.layers;
  write_json(dir / "rig.json", all);
  write_json(dir / "skeleton.json", sk);
  write_json(dir / "mesh.json", mesh);
  write_json(dir / "binding.json", bind);
  write_text(dir / "preview.svg", rig_preview_svg(rig));
  fs::copy_file(input, dir / all["input"].get<std::string>(), fs::copy_options::overwrite_existing);
}

struct LoadedRig {
  Rig rig;
  Subject subject;
  fs::path input;
  nlohmann::json settings;
  LayerGroups groups;
};

inline LoadedRig load_rig_dir(const fs::path& dir) {
  for (const char* f : {"rig.json", "skeleton.json", "mesh.json", "binding.json"})
    if (!fs::exists(dir / f)) fail(ErrorKind::Config, dir.string() + " is not a rig directory (missing " + f + ")");
  auto all = read_json(dir / "rig.json");
  const auto sk = read_json(dir / "skeleton.json"), mesh = read_json(dir / "mesh.json"), bind = read_json(dir / "binding.json");
  LoadedRig out;
  try {
    auto& parts = all.at("parts");
    if (sk.at("parts").size() != parts.size() || mesh.at("parts").size() != parts.size() ||
        bind.at("parts").size() != parts.size())
      fail(ErrorKind::Parse, "rig files in " + dir.string() + " disagree on the number of parts");
    for (std::size_t i = 0; i < parts.size(); ++i) {
      auto& p = parts[i];
      p["skeleton"] = {{"keypoints", sk["parts"][i].at("keypoints")}, {"bones", sk["parts"][i].at("bones")}};
      p["mesh"] = mesh["parts"][i].at("mesh");
      p["binding"] = bind["parts"][i].at("entries");
      p["sites"] = bind["parts"][i].at("sites");
    }
    out.input = dir / all.at("input").get<std::string>();
    out.settings = all.value("settings", nlohmann::json::object());
    if (all.contains("layer_groups")) out.groups = all.at("layer_groups").get<LayerGroups>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "malformed rig directory " + dir.string() + ": " + e.what());
  }
  out.rig = rig_from_json(all);
  out.subject = load_subject(out.input);
  return out;
}

/// Rigs a subject with the configured options and optional overrides.
inline Rig build_rig(const Subject& subject, const AppConfig& cfg) {
  std::map<std::string, Skeleton> overrides;
  if (!cfg.keypoints.empty()) overrides = keypoint_overrides_from_json(read_json(cfg.keypoints));
  if (const auto* doc = std::get_if<ClipartDocument>(&subject)) return rig_vector(*doc, cfg.layers, cfg.rig, overrides);
  if (!cfg.layers.empty()) fail(ErrorKind::Config, "layer groups apply to vector input only");
  if (overrides.size() > 1 || (overrides.size() == 1 && !overrides.count("") && !overrides.count("image")))
    fail(ErrorKind::Config, "bitmap keypoint overrides name a single part");
  std::optional<Skeleton> ov;
  if (!overrides.empty()) ov = overrides.begin()->second;
  return rig_bitmap(std::get<RasterImage>(subject), cfg.rig, ov);
}

// Runs -------------------------------------------------------------------------

inline nlohmann::json trajectories_json(const Rig& rig, const PartTrajectories& T) {
  nlohmann::json j{{"version", 1}, {"parts", nlohmann::json::array()}};
  for (std::size_t p = 0; p < T.size(); ++p) j["parts"].push_back({{"name", rig.parts[p].name}, {"set", to_json(T[p])}});
  return j;
}

inline PartTrajectories trajectories_from_run_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) fail(ErrorKind::Parse, "unsupported trajectory file version");
    PartTrajectories T;
    for (const auto& p : j.at("parts")) T.push_back(trajectories_from_json(p.at("set")));
    return T;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed trajectory file: ") + e.what());
  }
}

/// Per-frame geometry for the metrics: keypoints of all parts concatenated,
/// deformed control points and outline adjacency.
inline nlohmann::json geometry_json(const Optimizer& opt, const PartTrajectories& T) {
  auto pts = [](const std::vector<Vec2>& v) {
    auto a = nlohmann::json::array();
    for (Vec2 p : v) a.push_back({p.x, p.y});
    return a;
  };
  const auto sched = opt.config().schedule();
  const auto uk = opt.unique_keypoints(T);
  nlohmann::json j{{"version", 1}, {"outlines", opt.animator().rig().outlines}};
  j["keypoints"] = nlohmann::json::array();
  for (int t = 0; t < sched.frame_count; ++t) {
    std::vector<Vec2> all;
    for (const auto& part : uk[sched.source(t)]) all.insert(all.end(), part.begin(), part.end());
    j["keypoints"].push_back(pts(all));
  }
  j["control_points"] = nlohmann::json::array();
  for (const auto& f : opt.frame_control_points(T)) j["control_points"].push_back(pts(f));
  return j;
}

/// Reads a run directory's geometry and trajectories into a metrics record.
inline AnimationRecord load_animation_record(const fs::path& run) {
  AnimationRecord r;
  r.name = run.filename().empty() ? run.parent_path().filename().string() : run.filename().string();
  const auto geo = read_json(run / "geometry.json");
  auto frames = [](const nlohmann::json& j) {
    std::vector<std::vector<Vec2>> out;
    for (const auto& f : j) {
      std::vector<Vec2> v;
      for (const auto& p : f) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      out.push_back(std::move(v));
    }
    return out;
  };
  try {
    r.keypoints = frames(geo.at("keypoints"));
    r.control_points = frames(geo.at("control_points"));
    r.outlines = geo.at("outlines").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "malformed geometry in " + run.string() + ": " + e.what());
  }
  if (fs::exists(run / "trajectories.json")) r.trajectories = trajectories_from_run_json(read_json(run / "trajectories.json"));
  return r;
}

/// Writes PNG frames, the GIF and (for vector subjects) per-frame SVG files;
/// returns the paths written.
inline std::vector<fs::path> export_animation(const Optimizer& opt, const PartTrajectories& T, const fs::path& dir,
                                             double frame_delay) {
  std::vector<fs::path> out = export_frames(opt.render(T), dir / "frames", GifOptions{frame_delay, true});
  if (const auto* doc = std::get_if<ClipartDocument>(&opt.animator().subject())) {
    fs::create_directories(dir / "svg");
    const auto cps = opt.frame_control_points(T);
    for (std::size_t t = 0; t < cps.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03zu.svg", t);
      write_text(dir / "svg" / name, serialize_svg(with_control_points(*doc, cps[t])));
      out.push_back(dir / "svg" / name);
    }
  }
  return out;
}

/// Hashes of every file under `dir` (relative paths), skipping `skip`.
inline nlohmann::json inventory(const fs::path& dir, const std::set<std::string>& skip = {}) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : files) {
    const auto rel = fs::relative(f, dir).generic_string();
    if (!skip.count(rel)) j[rel] = sha256_file(f);
  }
  return j;
}

}  // namespace aniclip
