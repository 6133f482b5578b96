#pragma once

#include "json.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aniclip/binding.hpp"
#include "aniclip/contour.hpp"
#include "aniclip/document.hpp"
#include "aniclip/error.hpp"
#include "aniclip/skeleton.hpp"
#include "aniclip/triangulate.hpp"

namespace aniclip {

struct RigOptions {
  double rho = 0.7;
  double min_angle = 20.0;         // triangle quality, degrees
  double max_area = 0.002;         // triangle area bound, fraction of the squared bbox diagonal
  double flatten_tolerance = 0.001;  // curve flattening, fraction of the canvas diagonal
  double skeleton_tolerance = 0.005;  // contour simplification before skeletonization, same units
  double alpha_threshold = 0.5;    // bitmap foreground

  void validate() const {
    if (!(rho > 0)) fail(ErrorKind::Config, "rho must be positive");
    if (!(min_angle >= 0 && min_angle <= 33)) fail(ErrorKind::Config, "triangle quality must be within [0, 33] degrees");
    if (!(max_area > 0)) fail(ErrorKind::Config, "max triangle area must be positive");
    if (!(flatten_tolerance > 0) || !(skeleton_tolerance >= 0)) fail(ErrorKind::Config, "contour tolerances must be positive");
    if (!(alpha_threshold >= 0 && alpha_threshold < 1)) fail(ErrorKind::Config, "alpha threshold must be in [0, 1)");
  }
};

/// One independently deformed piece: a group of layers (vector) or the whole
/// image (bitmap).
struct RigPart {
  std::string name;
  std::vector<int> layers;       // document layer indices (vector subjects)
  std::vector<int> sites;        // global control-point indices bound by this part
  Polygon contour;
  Skeleton skeleton;
  TriangleMesh mesh;
  BarycentricBinding binding;    // one entry per site
  std::vector<std::string> warnings;
};

struct Rig {
  bool bitmap = false;
  double width = 0, height = 0;  // canvas
  std::vector<RigPart> parts;
  /// Closed polylines over global site indices (adjacency for curvature metrics).
  std::vector<std::vector<int>> outlines;
  std::size_t site_count = 0;
};

/// User-supplied keypoints and bones replacing the straight skeleton.
inline Skeleton skeleton_from_json(const nlohmann::json& j) {
  try {
    Skeleton s;
    for (const auto& p : j.at("keypoints")) s.keypoints.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    if (j.contains("bones"))
      for (const auto& b : j.at("bones")) s.bones.push_back({b.at(0).get<int>(), b.at(1).get<int>()});
    for (auto [a, b] : s.bones)
      if (a < 0 || b < 0 || a >= static_cast<int>(s.keypoints.size()) || b >= static_cast<int>(s.keypoints.size()) || a == b)
        fail(ErrorKind::Rig, "keypoint file has an invalid bone (" + std::to_string(a) + ", " + std::to_string(b) + ")");
    s.recompute_rest_lengths();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed keypoint file: ") + e.what());
  }
}

/// Keypoint override document: either {keypoints, bones} for a single part
/// (stored under the empty name) or {parts: {name: {keypoints, bones}}}.
inline std::map<std::string, Skeleton> keypoint_overrides_from_json(const nlohmann::json& j) {
  std::map<std::string, Skeleton> out;
  if (!j.is_object()) fail(ErrorKind::Parse, "keypoint file must be a JSON object");
  if (j.contains("parts")) {
    if (!j.at("parts").is_object()) fail(ErrorKind::Parse, "keypoint file 'parts' must map part names to skeletons");
    for (auto it = j.at("parts").begin(); it != j.at("parts").end(); ++it) out[it.key()] = skeleton_from_json(*it);
  } else {
    out[""] = skeleton_from_json(j);
  }
  return out;
}

inline nlohmann::json to_json(const Skeleton& s) {
  nlohmann::json j;
  j["keypoints"] = nlohmann::json::array();
  for (Vec2 p : s.keypoints) j["keypoints"].push_back({p.x, p.y});
  j["bones"] = nlohmann::json::array();
  for (auto [a, b] : s.bones) j["bones"].push_back({a, b});
  return j;
}

namespace rig_detail {

inline Skeleton build_skeleton(const Polygon& contour, double simplify_tol, double rho, std::vector<std::string>& warnings) {
  Polygon outer{contour.vertices, {}};
  if (simplify_tol > 0) outer.vertices = simplify_ring(outer.vertices, simplify_tol);
  Skeleton pruned = prune_outer_bones(straight_skeleton(outer));
  for (auto& w : pruned.warnings) warnings.push_back(w);
  if (pruned.bones.empty()) {
    warnings.push_back("skeleton collapsed to a single keypoint; the part will only translate");
    pruned.recompute_rest_lengths();
    return pruned;
  }
  return simplify_skeleton(std::move(pruned), rho);
}

inline std::vector<int> keypoint_handles(const TriangleMesh& mesh) { return mesh.keypoint_vertex; }

inline void finish_part(RigPart& part, const std::optional<Skeleton>& override, const RigOptions& opt, double diag,
                        std::span<const Vec2> sites, bool extrapolate) {
  if (!part.contour.holes.empty()) {
    part.warnings.push_back("silhouette holes dropped for rigging (" + std::to_string(part.contour.holes.size()) + ")");
    part.contour.holes.clear();
  }
  part.skeleton = override ? *override
                           : build_skeleton(part.contour, opt.skeleton_tolerance * diag, opt.rho, part.warnings);
  const double bdiag = bounds_of(part.contour.vertices).diagonal();
  TriangulateOptions topt;
  topt.min_angle_deg = opt.min_angle;
  topt.max_area = opt.max_area * bdiag * bdiag;
  try {
    part.mesh = triangulate(part.contour, part.skeleton.keypoints, topt);
  } catch (const Error& e) {
    fail(ErrorKind::Rig, "part '" + part.name + "': " + e.what());
  }
  // Nudged keypoints move with their vertices.
  for (std::size_t k = 0; k < part.skeleton.keypoints.size(); ++k)
    part.skeleton.keypoints[k] = part.mesh.vertices[part.mesh.keypoint_vertex[k]];
  part.skeleton.recompute_rest_lengths();
  part.binding = extrapolate ? bind_points_extrapolated(part.mesh, sites) : bind_points(part.mesh, sites);
}

}  // namespace rig_detail

/// Layer groups by name; an empty list means one group with every layer.
using LayerGroups = std::vector<std::vector<std::string>>;

/// Rigs a vector document. Each group's silhouette gets its own skeleton,
/// mesh and binding of the group's control points.
inline Rig rig_vector(const ClipartDocument& doc, const LayerGroups& groups, const RigOptions& opt,
                      const std::map<std::string, Skeleton>& overrides = {}) {
  opt.validate();
  doc.validate();
  Rig rig;
  rig.width = doc.width;
  rig.height = doc.height;
  const double diag = std::hypot(doc.width, doc.height);

  // Global control-point offsets per layer (document order).
  std::vector<int> layer_offset(doc.layers.size() + 1, 0);
  for (std::size_t l = 0; l < doc.layers.size(); ++l) {
    int n = 0;
    for (const auto& p : doc.layers[l].paths) n += static_cast<int>(p.control_point_count());
    layer_offset[l + 1] = layer_offset[l] + n;
  }
  rig.site_count = static_cast<std::size_t>(layer_offset.back());

  std::vector<std::vector<int>> index_groups;
  std::vector<std::string> names;
  if (groups.empty()) {
    std::vector<int> all(doc.layers.size());
    std::iota(all.begin(), all.end(), 0);
    index_groups.push_back(all);
    names.push_back("all");
  } else {
    std::set<int> seen;
    for (const auto& g : groups) {
      std::vector<int> idx;
      std::string name;
      for (const auto& n : g) {
        int found = -1;
        for (std::size_t l = 0; l < doc.layers.size(); ++l)
          if (doc.layers[l].name == n) found = static_cast<int>(l);
        if (found < 0) fail(ErrorKind::Config, "layer group names unknown layer '" + n + "'");
        if (!seen.insert(found).second) fail(ErrorKind::Config, "layer '" + n + "' appears in two groups");
        idx.push_back(found);
        name += (name.empty() ? "" : "+") + n;
      }
      if (idx.empty()) fail(ErrorKind::Config, "empty layer group");
      std::sort(idx.begin(), idx.end());
      index_groups.push_back(idx);
      names.push_back(name);
    }
    for (std::size_t l = 0; l < doc.layers.size(); ++l)
      if (!seen.count(static_cast<int>(l))) fail(ErrorKind::Config, "layer '" + doc.layers[l].name + "' is in no group");
  }

  for (std::size_t g = 0; g < index_groups.size(); ++g) {
    RigPart part;
    part.name = names[g];
    part.layers = index_groups[g];
    ClipartDocument sub{doc.width, doc.height, {}};
    for (int l : part.layers) sub.layers.push_back(doc.layers[l]);
    const auto contour = extract_contour(sub, opt.flatten_tolerance * diag);
    if (contour.component_count > 1)
      part.warnings.push_back("silhouette has " + std::to_string(contour.component_count) +
                              " components; rigging the largest, other paths follow its mesh");
    part.contour = contour.polygon;
    std::vector<Vec2> sites;
    for (int l : part.layers) {
      int k = layer_offset[l];
      for (const auto& p : doc.layers[l].paths)
        for (const auto& s : p.subpaths)
          for (Vec2 pt : s.points) part.sites.push_back(k++), sites.push_back(pt);
    }
    std::optional<Skeleton> ov;
    if (auto it = overrides.find(part.name); it != overrides.end()) ov = it->second;
    else if (index_groups.size() == 1 && overrides.count("")) ov = overrides.at("");
    rig_detail::finish_part(part, ov, opt, diag, sites, true);
    rig.parts.push_back(std::move(part));
  }

  int k = 0;
  for (const auto& l : doc.layers)
    for (const auto& p : l.paths)
      for (const auto& s : p.subpaths) {
        std::vector<int> ring(s.points.size());
        std::iota(ring.begin(), ring.end(), k);
        k += static_cast<int>(s.points.size());
        if (ring.size() >= 2) rig.outlines.push_back(std::move(ring));
      }
  return rig;
}

/// Rigs a bitmap. The mesh covers every visible pixel (crack boundary of
/// alpha > 0) so the rest pose reproduces the image; the skeleton comes from
/// the thresholded silhouette. Bound sites are the silhouette's vertices.
inline Rig rig_bitmap(const RasterImage& image, const RigOptions& opt, const std::optional<Skeleton>& override = {}) {
  opt.validate();
  Rig rig;
  rig.bitmap = true;
  rig.width = image.width;
  rig.height = image.height;
  const double diag = std::hypot(image.width, image.height);
  RigPart part;
  part.name = "image";
  const auto support = trace_bitmap(image, 0.0);
  if (support.component_count > 1)
    part.warnings.push_back("image has " + std::to_string(support.component_count) +
                            " separate visible regions; only the largest is animated");
  part.contour = support.polygon;
  Polygon fg = trace_bitmap(image, opt.alpha_threshold).polygon;
  fg.holes.clear();
  if (!override) part.skeleton = rig_detail::build_skeleton(fg, opt.skeleton_tolerance * diag, opt.rho, part.warnings);
  const Skeleton skel = override ? *override : part.skeleton;
  std::vector<Vec2> sites = part.contour.vertices;
  part.sites.resize(sites.size());
  std::iota(part.sites.begin(), part.sites.end(), 0);
  rig_detail::finish_part(part, skel, opt, diag, sites, false);
  rig.site_count = sites.size();
  rig.outlines.push_back(part.sites);
  rig.parts.push_back(std::move(part));
  return rig;
}

// Serialization -------------------------------------------------------------

inline nlohmann::json to_json(const Rig& rig) {
  nlohmann::json j;
  j["version"] = 1;
  j["bitmap"] = rig.bitmap;
  j["canvas"] = {rig.width, rig.height};
  j["site_count"] = rig.site_count;
  j["outlines"] = rig.outlines;
  j["parts"] = nlohmann::json::array();
  for (const auto& p : rig.parts) {
    nlohmann::json jp;
    jp["name"] = p.name;
    jp["layers"] = p.layers;
    jp["sites"] = p.sites;
    jp["skeleton"] = to_json(p.skeleton);
    auto& m = jp["mesh"];
    m["vertices"] = nlohmann::json::array();
    for (Vec2 v : p.mesh.vertices) m["vertices"].push_back({v.x, v.y});
    m["triangles"] = p.mesh.triangles;
    m["keypoint_vertex"] = p.mesh.keypoint_vertex;
    auto& c = jp["contour"] = nlohmann::json::array();
    for (Vec2 v : p.contour.vertices) c.push_back({v.x, v.y});
    auto& b = jp["binding"] = nlohmann::json::array();
    for (const auto& e : p.binding.entries)
      b.push_back({e.triangle, e.weights[0], e.weights[1], e.weights[2], e.rest.x, e.rest.y});
    jp["warnings"] = p.warnings;
    j["parts"].push_back(std::move(jp));
  }
  return j;
}

inline Rig rig_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) fail(ErrorKind::Parse, "unsupported rig file version");
    Rig rig;
    rig.bitmap = j.at("bitmap").get<bool>();
    rig.width = j.at("canvas").at(0).get<double>();
    rig.height = j.at("canvas").at(1).get<double>();
    rig.site_count = j.at("site_count").get<std::size_t>();
    rig.outlines = j.at("outlines").get<std::vector<std::vector<int>>>();
    for (const auto& jp : j.at("parts")) {
      RigPart p;
      p.name = jp.at("name").get<std::string>();
      p.layers = jp.at("layers").get<std::vector<int>>();
      p.sites = jp.at("sites").get<std::vector<int>>();
      p.skeleton = skeleton_from_json(jp.at("skeleton"));
      for (const auto& v : jp.at("mesh").at("vertices")) p.mesh.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      p.mesh.triangles = jp.at("mesh").at("triangles").get<std::vector<std::array<int, 3>>>();
      p.mesh.keypoint_vertex = jp.at("mesh").at("keypoint_vertex").get<std::vector<int>>();
      for (const auto& v : jp.at("contour")) p.contour.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
      for (const auto& e : jp.at("binding")) {
        BarycentricBinding::Entry en;
        en.triangle = e.at(0).get<int>();
        en.weights = {e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()};
        en.rest = {e.at(4).get<double>(), e.at(5).get<double>()};
        p.binding.entries.push_back(en);
      }
      p.warnings = jp.value("warnings", std::vector<std::string>{});
      const int nv = static_cast<int>(p.mesh.vertices.size());
      for (const auto& f : p.mesh.triangles)
        for (int v : f)
          if (v < 0 || v >= nv) fail(ErrorKind::Parse, "rig mesh has an out-of-range vertex index");
      for (const auto& e : p.binding.entries)
        if (e.triangle < 0 || e.triangle >= static_cast<int>(p.mesh.triangles.size()))
          fail(ErrorKind::Parse, "rig binding refers to a missing triangle");
      if (p.mesh.keypoint_vertex.size() != p.skeleton.keypoints.size() || p.binding.entries.size() != p.sites.size())
        fail(ErrorKind::Parse, "rig part '" + p.name + "' is inconsistent");
      rig.parts.push_back(std::move(p));
    }
    return rig;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed rig file: ") + e.what());
  }
}

/// Overlay of contour, mesh and skeleton for visual inspection.
inline std::string rig_preview_svg(const Rig& rig) {
  std::ostringstream s;
  s.precision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << rig.width << "\" height=\"" << rig.height
    << "\" viewBox=\"0 0 " << rig.width << " " << rig.height << "\">\n";
  const double stroke = std::hypot(rig.width, rig.height) / 600.0;
  for (const auto& p : rig.parts) {
    s << "<g id=\"" << p.name << "\">\n";
    s << "<g fill=\"none\" stroke=\"#9ab\" stroke-width=\"" << stroke << "\">\n";
    for (const auto& f : p.mesh.triangles) {
      s << "<path d=\"M";
      for (int k = 0; k < 3; ++k) s << (k ? " L" : "") << p.mesh.vertices[f[k]].x << " " << p.mesh.vertices[f[k]].y;
      s << " Z\"/>\n";
    }
    s << "</g>\n<path fill=\"none\" stroke=\"#000\" stroke-width=\"" << 2 * stroke << "\" d=\"M";
    for (std::size_t i = 0; i < p.contour.vertices.size(); ++i)
      s << (i ? " L" : "") << p.contour.vertices[i].x << " " << p.contour.vertices[i].y;
    s << " Z\"/>\n<g stroke=\"#d22\" stroke-width=\"" << 3 * stroke << "\">\n";
    for (auto [a, b] : p.skeleton.bones)
      s << "<line x1=\"" << p.skeleton.keypoints[a].x << "\" y1=\"" << p.skeleton.keypoints[a].y << "\" x2=\""
        << p.skeleton.keypoints[b].x << "\" y2=\"" << p.skeleton.keypoints[b].y << "\"/>\n";
    s << "</g>\n<g fill=\"#d22\">\n";
    for (Vec2 k : p.skeleton.keypoints) s << "<circle cx=\"" << k.x << "\" cy=\"" << k.y << "\" r=\"" << 5 * stroke << "\"/>\n";
    s << "</g>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace aniclip
