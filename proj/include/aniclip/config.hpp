#pragma once

#include "json.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/optimize.hpp"
#include "aniclip/remote.hpp"
#include "aniclip/rig.hpp"

namespace aniclip {

// TOML subset ------------------------------------------------------------------
//
// Supported: comments, [table] and [dotted.table] headers, bare or quoted keys,
// basic strings with the usual escapes, integers, floats (incl. inf/nan),
// booleans and (nested, multi-line) arrays. Not supported: inline tables,
// literal/multi-line strings, dates, arrays of tables.

namespace toml_detail {

class Parser {
 public:
  Parser(std::string_view text, std::string source) : s_(text), source_(std::move(source)) {}

  nlohmann::json parse() {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* table = &root;
    std::set<std::string> defined_tables;
    while (true) {
      skip_ws_comments_newlines();
      if (at_end()) break;
      if (peek() == '[') {
        ++i_;
        skip_inline_ws();
        std::vector<std::string> path = key_path();
        skip_inline_ws();
        expect(']');
        std::string joined;
        for (const auto& k : path) joined += (joined.empty() ? "" : ".") + k;
        if (!defined_tables.insert(joined).second) error("table [" + joined + "] defined twice");
        table = &root;
        for (const auto& k : path) {
          auto& next = (*table)[k];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) error("'" + k + "' is not a table");
          table = &next;
        }
      } else {
        std::vector<std::string> path = key_path();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        nlohmann::json v = value();
        nlohmann::json* t = table;
        for (std::size_t k = 0; k + 1 < path.size(); ++k) {
          auto& next = (*t)[path[k]];
          if (next.is_null()) next = nlohmann::json::object();
          if (!next.is_object()) error("'" + path[k] + "' is not a table");
          t = &next;
        }
        if (t->contains(path.back())) error("key '" + path.back() + "' defined twice");
        (*t)[path.back()] = std::move(v);
      }
      skip_inline_ws();
      skip_comment();
      if (!at_end() && peek() != '\n' && peek() != '\r') error("unexpected text after value");
    }
    return root;
  }

 private:
  bool at_end() const { return i_ >= s_.size(); }
  char peek() const { return s_[i_]; }

  [[noreturn]] void error(const std::string& what) const {
    int line = 1;
    for (std::size_t k = 0; k < i_ && k < s_.size(); ++k) line += s_[k] == '\n';
    fail(ErrorKind::Config, source_ + ":" + std::to_string(line) + ": " + what);
  }

  void expect(char c) {
    if (at_end() || peek() != c) error(std::string("expected '") + c + "'");
    ++i_;
  }
  void skip_inline_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t')) ++i_;
  }
  void skip_comment() {
    if (!at_end() && peek() == '#')
      while (!at_end() && peek() != '\n') ++i_;
  }
  void skip_ws_comments_newlines() {
    while (!at_end()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') ++i_;
      else if (c == '#') skip_comment();
      else break;
    }
  }

  std::string key() {
    if (!at_end() && peek() == '"') return basic_string();
    if (!at_end() && peek() == '\'') return literal_string();
    const std::size_t start = i_;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++i_;
    if (i_ == start) error("expected a key");
    return std::string(s_.substr(start, i_ - start));
  }

  std::vector<std::string> key_path() {
    std::vector<std::string> path{key()};
    while (true) {
      skip_inline_ws();
      if (at_end() || peek() != '.') break;
      ++i_;
      skip_inline_ws();
      path.push_back(key());
    }
    return path;
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') error("unterminated string");
      const char c = s_[i_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) error("unterminated escape");
      const char e = s_[i_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: error(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string literal_string() {
    expect('\'');
    const std::size_t start = i_;
    while (!at_end() && peek() != '\'' && peek() != '\n') ++i_;
    if (at_end() || peek() != '\'') error("unterminated string");
    return std::string(s_.substr(start, i_++ - start));
  }

  nlohmann::json value() {
    if (at_end()) error("missing value");
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') {
      ++i_;
      nlohmann::json arr = nlohmann::json::array();
      while (true) {
        skip_ws_comments_newlines();
        if (at_end()) error("unterminated array");
        if (peek() == ']') {
          ++i_;
          break;
        }
        arr.push_back(value());
        skip_ws_comments_newlines();
        if (!at_end() && peek() == ',') ++i_;
        else if (!at_end() && peek() != ']') error("expected ',' or ']' in array");
      }
      return arr;
    }
    const std::size_t start = i_;
    while (!at_end() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' && peek() != '#') ++i_;
    std::string tok(s_.substr(start, i_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string clean;
    for (char ch : tok)
      if (ch != '_') clean += ch;
    if (clean == "inf" || clean == "+inf") return INFINITY;
    if (clean == "-inf") return -INFINITY;
    if (clean == "nan" || clean == "+nan" || clean == "-nan") return NAN;
    if (clean.empty()) error("missing value");
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    char* end = nullptr;
    errno = 0;
    if (is_float) {
      const double d = std::strtod(clean.c_str(), &end);
      if (*end != '\0' || errno == ERANGE) error("bad number '" + tok + "'");
      return d;
    }
    const long long v = std::strtoll(clean.c_str(), &end, 10);
    if (*end != '\0' || errno == ERANGE) error("bad value '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::string source_;
  std::size_t i_ = 0;
};

}  // namespace toml_detail

inline nlohmann::json parse_toml(std::string_view text, const std::string& source = "config") {
  return toml_detail::Parser(text, source).parse();
}

inline nlohmann::json read_toml(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_toml(text, path.string());
}

// Application settings -----------------------------------------------------------

struct ProviderSettings {
  std::string kind = "mock";  // mock | remote
  RemoteOptions remote;
  double guidance_scale = 50.0;  // classifier-free guidance s for the service
  double mock_weight = 1.0;
  std::string mock_targets;      // trajectory dump (or run dir) the mock pulls towards
};

struct RenderSettings {
  int width = 256, height = 256;  // guidance resolution when the provider does not declare one
  int export_width = 0, export_height = 0;  // 0 = guidance resolution
  double frame_delay = 1.0 / 12.0;
};

struct AppConfig {
  RigOptions rig;
  std::string keypoints;  // override file
  OptimConfig optimize;
  ProviderSettings provider;
  RenderSettings render;
  LayerGroups layers;

  void validate() const {
    rig.validate();
    optimize.validate();
    if (provider.kind != "mock" && provider.kind != "remote")
      fail(ErrorKind::Config, "provider must be mock or remote, got '" + provider.kind + "'");
    if (!(provider.guidance_scale >= 0)) fail(ErrorKind::Config, "guidance scale must be non-negative");
    if (!(provider.mock_weight > 0)) fail(ErrorKind::Config, "mock weight must be positive");
    if (render.width <= 0 || render.height <= 0) fail(ErrorKind::Config, "render size must be positive");
    if (render.export_width < 0 || render.export_height < 0) fail(ErrorKind::Config, "export size must be non-negative");
    if (!(render.frame_delay > 0)) fail(ErrorKind::Config, "frame delay must be positive");
  }
};

inline nlohmann::json to_json(const AppConfig& c) {
  nlohmann::json j;
  j["rig"] = {{"rho", c.rig.rho},
              {"quality", c.rig.min_angle},
              {"max_area", c.rig.max_area},
              {"flatten_tolerance", c.rig.flatten_tolerance},
              {"skeleton_tolerance", c.rig.skeleton_tolerance},
              {"alpha_threshold", c.rig.alpha_threshold},
              {"keypoints", c.keypoints}};
  j["optimize"] = to_json(c.optimize);
  j["provider"] = {{"kind", c.provider.kind},
                   {"endpoint", c.provider.remote.endpoint},
                   {"timeout", c.provider.remote.timeout},
                   {"attempts", c.provider.remote.attempts},
                   {"backoff", c.provider.remote.backoff},
                   {"guidance_scale", c.provider.guidance_scale},
                   {"mock_weight", c.provider.mock_weight},
                   {"mock_targets", c.provider.mock_targets}};
  j["render"] = {{"width", c.render.width},
                 {"height", c.render.height},
                 {"export_width", c.render.export_width},
                 {"export_height", c.render.export_height},
                 {"frame_delay", c.render.frame_delay}};
  j["layers"] = {{"groups", c.layers}};
  return j;
}

namespace config_detail {

template <typename T>
void take(const nlohmann::json& table, const std::string& section, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!table.contains(key)) return;
  const auto& v = table.at(key);
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw std::invalid_argument("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && v.get<long long>() < 0) throw std::invalid_argument("");
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw std::invalid_argument("");
    }
    out = v.get<T>();
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "[" + section + "] " + key + " has the wrong type: " + v.dump());
  }
}

inline void reject_unknown(const nlohmann::json& table, const std::string& section, const std::set<std::string>& seen) {
  for (auto it = table.begin(); it != table.end(); ++it)
    if (!seen.count(it.key())) fail(ErrorKind::Config, "unknown setting [" + section + "] " + it.key());
}

inline LayerGroups layer_groups_from(const nlohmann::json& v) {
  LayerGroups g;
  if (!v.is_array()) fail(ErrorKind::Config, "layer groups must be an array of arrays of layer names");
  for (const auto& grp : v) {
    if (!grp.is_array()) fail(ErrorKind::Config, "layer groups must be an array of arrays of layer names");
    std::vector<std::string> names;
    for (const auto& n : grp) {
      if (!n.is_string()) fail(ErrorKind::Config, "layer names must be strings");
      names.push_back(n.get<std::string>());
    }
    g.push_back(std::move(names));
  }
  return g;
}

}  // namespace config_detail

/// Overlays a parsed config document onto `base`. Unknown keys are errors.
inline AppConfig apply_config(AppConfig c, const nlohmann::json& doc) {
  using namespace config_detail;
  if (!doc.is_object()) fail(ErrorKind::Config, "config must be a table");
  const std::set<std::string> sections{"rig", "optimize", "provider", "render", "layers"};
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!sections.count(it.key()) || !it->is_object()) fail(ErrorKind::Config, "unknown config section '" + it.key() + "'");
  const auto empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& { return doc.contains(name) ? doc.at(name) : empty; };
  {
    const auto& t = section("rig");
    std::set<std::string> seen;
    take(t, "rig", "rho", c.rig.rho, seen);
    take(t, "rig", "quality", c.rig.min_angle, seen);
    take(t, "rig", "max_area", c.rig.max_area, seen);
    take(t, "rig", "flatten_tolerance", c.rig.flatten_tolerance, seen);
    take(t, "rig", "skeleton_tolerance", c.rig.skeleton_tolerance, seen);
    take(t, "rig", "alpha_threshold", c.rig.alpha_threshold, seen);
    take(t, "rig", "keypoints", c.keypoints, seen);
    reject_unknown(t, "rig", seen);
  }
  {
    const auto& t = section("optimize");
    std::set<std::string> seen;
    auto& o = c.optimize;
    take(t, "optimize", "steps", o.steps, seen);
    take(t, "optimize", "learning_rate", o.learning_rate, seen);
    take(t, "optimize", "lambda", o.lambda, seen);
    take(t, "optimize", "frames", o.frames, seen);
    take(t, "optimize", "looping", o.looping, seen);
    take(t, "optimize", "endpoint_sampling", o.endpoint_sampling, seen);
    take(t, "optimize", "order", o.order, seen);
    take(t, "optimize", "seed", o.seed, seen);
    take(t, "optimize", "beta1", o.beta1, seen);
    take(t, "optimize", "beta2", o.beta2, seen);
    take(t, "optimize", "epsilon", o.epsilon, seen);
    take(t, "optimize", "grad_clip", o.grad_clip, seen);
    take(t, "optimize", "init_sigma", o.init_sigma, seen);
    take(t, "optimize", "prompt", o.prompt, seen);
    take(t, "optimize", "threads", o.threads, seen);
    std::string deformer = to_string(o.deformer);
    take(t, "optimize", "deformer", deformer, seen);
    o.deformer = deformer_from_string(deformer);
    reject_unknown(t, "optimize", seen);
  }
  {
    const auto& t = section("provider");
    std::set<std::string> seen;
    auto& p = c.provider;
    take(t, "provider", "kind", p.kind, seen);
    take(t, "provider", "endpoint", p.remote.endpoint, seen);
    take(t, "provider", "timeout", p.remote.timeout, seen);
    take(t, "provider", "attempts", p.remote.attempts, seen);
    take(t, "provider", "backoff", p.remote.backoff, seen);
    take(t, "provider", "guidance_scale", p.guidance_scale, seen);
    take(t, "provider", "mock_weight", p.mock_weight, seen);
    take(t, "provider", "mock_targets", p.mock_targets, seen);
    reject_unknown(t, "provider", seen);
  }
  {
    const auto& t = section("render");
    std::set<std::string> seen;
    take(t, "render", "width", c.render.width, seen);
    take(t, "render", "height", c.render.height, seen);
    take(t, "render", "export_width", c.render.export_width, seen);
    take(t, "render", "export_height", c.render.export_height, seen);
    take(t, "render", "frame_delay", c.render.frame_delay, seen);
    reject_unknown(t, "render", seen);
  }
  {
    const auto& t = section("layers");
    for (auto it = t.begin(); it != t.end(); ++it)
      if (it.key() != "groups") fail(ErrorKind::Config, "unknown setting [layers] " + it.key());
    if (t.contains("groups")) c.layers = layer_groups_from(t.at("groups"));
  }
  c.validate();
  return c;
}

/// Layer group file: `groups = [["body"], ["left_arm", "right_arm"]]`.
inline LayerGroups read_layer_groups(const std::filesystem::path& path) {
  const auto doc = read_toml(path);
  if (!doc.contains("groups")) fail(ErrorKind::Config, path.string() + " has no 'groups' key");
  return config_detail::layer_groups_from(doc.at("groups"));
}

/// Settings the guidance service should run with.
inline nlohmann::json service_config(const AppConfig& c) {
  return {{"guidance_scale", c.provider.guidance_scale},
          {"resolution", {c.render.width, c.render.height}},
          {"stub_mode", false},
          {"weighting", "constant"}};
}

/// Environment variable that overrides the provider endpoint.
inline constexpr const char* kEndpointEnv = "ANICLIP_ENDPOINT";

}  // namespace aniclip
