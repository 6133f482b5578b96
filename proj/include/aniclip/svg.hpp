#pragma once

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <charconv>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "aniclip/document.hpp"

namespace aniclip {

namespace svg_detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ','; }

/// Cursor over SVG path data; numbers follow the SVG grammar (implicit
/// separators such as "1-2" or ".5.5" are accepted).
class PathLexer {
 public:
  explicit PathLexer(std::string_view d) : d_(d) {}

  void skip() {
    while (pos_ < d_.size() && is_space(d_[pos_])) ++pos_;
  }
  bool done() {
    skip();
    return pos_ >= d_.size();
  }
  std::size_t pos() const { return pos_; }
  char peek() {
    skip();
    return pos_ < d_.size() ? d_[pos_] : '\0';
  }
  bool next_is_number() {
    const char c = peek();
    return c == '-' || c == '+' || c == '.' || std::isdigit(static_cast<unsigned char>(c));
  }
  char command() {
    const char c = peek();
    ++pos_;
    return c;
  }
  double number() {
    skip();
    const std::size_t start = pos_;
    std::size_t i = pos_;
    if (i < d_.size() && (d_[i] == '+' || d_[i] == '-')) ++i;
    bool digits = false, dot = false;
    while (i < d_.size()) {
      const char c = d_[i];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        digits = true;
      } else if (c == '.' && !dot) {
        dot = true;
      } else {
        break;
      }
      ++i;
    }
    if (digits && i < d_.size() && (d_[i] == 'e' || d_[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < d_.size() && (d_[j] == '+' || d_[j] == '-')) ++j;
      if (j < d_.size() && std::isdigit(static_cast<unsigned char>(d_[j]))) {
        while (j < d_.size() && std::isdigit(static_cast<unsigned char>(d_[j]))) ++j;
        i = j;
      }
    }
    if (!digits) throw ParseError("malformed path data: expected number", start);
    std::string tok(d_.substr(start, i - start));
    if (tok[0] == '+') tok.erase(0, 1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw ParseError("malformed path data: bad number '" + tok + "'", start);
    pos_ = i;
    return v;
  }

 private:
  std::string_view d_;
  std::size_t pos_ = 0;
};

struct PathBuilder {
  std::vector<SubPath> subpaths;
  SubPath cur;
  bool open = false;

  void flush() {
    if (open && !cur.points.empty() && !cur.kinds.empty()) subpaths.push_back(std::move(cur));
    cur = SubPath{};
    open = false;
  }
  void move_to(Vec2 p) {
    flush();
    cur.points = {p};
    open = true;
  }
  void line_to(Vec2 p) {
    cur.points.push_back(p);
    cur.kinds.push_back(SegmentKind::Line);
  }
  void cubic_to(Vec2 h1, Vec2 h2, Vec2 p) {
    cur.points.insert(cur.points.end(), {h1, h2, p});
    cur.kinds.push_back(SegmentKind::Cubic);
  }
  void close() {
    if (!open || cur.kinds.empty()) return;
    if (cur.points.back() == cur.points.front()) {
      cur.points.pop_back();  // last segment now wraps to the start anchor
    } else {
      cur.kinds.push_back(SegmentKind::Line);
    }
    cur.closed = true;
  }
};

/// Parses SVG path data into subpaths. Quadratics are degree-elevated to cubics.
inline std::vector<SubPath> parse_path_data(std::string_view d, const Affine2& xf) {
  PathLexer lex(d);
  PathBuilder b;
  Vec2 pen, start, last_cubic_handle, last_quad_handle;
  char prev = 0;
  char cmd = 0;
  while (!lex.done()) {
    const std::size_t at = lex.pos();
    if (!lex.next_is_number()) {
      cmd = lex.command();
    } else if (cmd == 0) {
      throw ParseError("malformed path data: missing command", at);
    } else if (cmd == 'M') {
      cmd = 'L';
    } else if (cmd == 'm') {
      cmd = 'l';
    } else if (cmd == 'Z' || cmd == 'z') {
      throw ParseError("malformed path data: number after closepath", at);
    }
    const bool rel = std::islower(static_cast<unsigned char>(cmd));
    const Vec2 base = rel ? pen : Vec2{};
    auto pt = [&] {
      const double x = lex.number();
      const double y = lex.number();
      return base + Vec2{x, y};
    };
    const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(cmd)));
    if (up != 'M' && up != 'Z' && !b.open) throw ParseError("malformed path data: drawing before moveto", at);
    switch (up) {
      case 'M':
        pen = start = pt();
        b.move_to(pen);
        break;
      case 'L':
        pen = pt();
        b.line_to(pen);
        break;
      case 'H':
        pen = {lex.number() + (rel ? pen.x : 0.0), pen.y};
        b.line_to(pen);
        break;
      case 'V':
        pen = {pen.x, lex.number() + (rel ? pen.y : 0.0)};
        b.line_to(pen);
        break;
      case 'C': {
        const Vec2 h1 = pt(), h2 = pt(), p = pt();
        b.cubic_to(h1, h2, p);
        last_cubic_handle = h2;
        pen = p;
        break;
      }
      case 'S': {
        const char pu = static_cast<char>(std::toupper(static_cast<unsigned char>(prev)));
        const Vec2 h1 = (pu == 'C' || pu == 'S') ? 2.0 * pen - last_cubic_handle : pen;
        const Vec2 h2 = pt(), p = pt();
        b.cubic_to(h1, h2, p);
        last_cubic_handle = h2;
        pen = p;
        break;
      }
      case 'Q':
      case 'T': {
        Vec2 q;
        if (up == 'Q') {
          q = pt();
        } else {
          const char pu = static_cast<char>(std::toupper(static_cast<unsigned char>(prev)));
          q = (pu == 'Q' || pu == 'T') ? 2.0 * pen - last_quad_handle : pen;
        }
        const Vec2 p = pt();
        b.cubic_to(pen + (2.0 / 3.0) * (q - pen), p + (2.0 / 3.0) * (q - p), p);
        last_quad_handle = q;
        pen = p;
        break;
      }
      case 'Z':
        b.close();
        pen = start;
        break;
      default:
        throw ParseError(std::string("unsupported path command '") + cmd + "'", at);
    }
    prev = cmd;
  }
  b.flush();
  for (auto& s : b.subpaths)
    for (auto& p : s.points) p = xf.apply(p);
  return b.subpaths;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, e = s.size();
  while (a < e && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (e > a && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(a, e - a));
}

inline std::vector<double> number_list(std::string_view s) {
  std::vector<double> out;
  PathLexer lex(s);
  while (!lex.done()) out.push_back(lex.number());
  return out;
}

inline Affine2 parse_transform(std::string_view s) {
  Affine2 m;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    if (i >= s.size()) break;
    const std::size_t open = s.find('(', i);
    const std::size_t close = s.find(')', i);
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
      throw ParseError("malformed transform '" + std::string(s) + "'", i);
    const std::string name = trim(s.substr(i, open - i));
    const auto v = number_list(s.substr(open + 1, close - open - 1));
    auto need = [&](std::size_t lo, std::size_t hi) {
      if (v.size() < lo || v.size() > hi) throw ParseError("bad argument count for transform " + name, open);
    };
    Affine2 t;
    if (name == "matrix") {
      need(6, 6);
      t = {v[0], v[1], v[2], v[3], v[4], v[5]};
    } else if (name == "translate") {
      need(1, 2);
      t = Affine2::translate(v[0], v.size() > 1 ? v[1] : 0.0);
    } else if (name == "scale") {
      need(1, 2);
      t = Affine2::scale(v[0], v.size() > 1 ? v[1] : v[0]);
    } else if (name == "rotate") {
      need(1, 3);
      if (v.size() == 2) throw ParseError("bad argument count for transform rotate", open);
      t = Affine2::rotate(v[0] * M_PI / 180.0);
      if (v.size() == 3) t = Affine2::translate(v[1], v[2]) * t * Affine2::translate(-v[1], -v[2]);
    } else if (name == "skewX") {
      need(1, 1);
      t = {1, 0, std::tan(v[0] * M_PI / 180.0), 1, 0, 0};
    } else if (name == "skewY") {
      need(1, 1);
      t = {1, std::tan(v[0] * M_PI / 180.0), 0, 1, 0, 0};
    } else {
      throw Error(ErrorKind::Parse, "unsupported transform '" + name + "'");
    }
    m = m * t;
    i = close + 1;
  }
  return m;
}

inline const std::map<std::string, Rgba>& named_colors() {
  static const std::map<std::string, Rgba> table = {
      {"black", {0, 0, 0, 1}},          {"white", {1, 1, 1, 1}},
      {"red", {1, 0, 0, 1}},            {"green", {0, 128 / 255.0, 0, 1}},
      {"blue", {0, 0, 1, 1}},           {"yellow", {1, 1, 0, 1}},
      {"gray", {128 / 255.0, 128 / 255.0, 128 / 255.0, 1}},
      {"grey", {128 / 255.0, 128 / 255.0, 128 / 255.0, 1}},
      {"orange", {1, 165 / 255.0, 0, 1}}, {"purple", {128 / 255.0, 0, 128 / 255.0, 1}},
  };
  return table;
}

/// Parses a solid paint; returns nullopt for "none". Gradients and patterns are rejected.
inline std::optional<Rgba> parse_paint(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "none" || s == "transparent") return std::nullopt;
  if (s.rfind("url(", 0) == 0) throw Error(ErrorKind::Parse, "unsupported feature: gradient/pattern fill " + s);
  auto hex = [&](char c) -> int {
    if (std::isdigit(static_cast<unsigned char>(c))) return c - '0';
    const char l = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (l >= 'a' && l <= 'f') return 10 + l - 'a';
    throw Error(ErrorKind::Parse, "bad color '" + s + "'");
  };
  if (!s.empty() && s[0] == '#') {
    if (s.size() == 4)
      return Rgba{hex(s[1]) * 17 / 255.0, hex(s[2]) * 17 / 255.0, hex(s[3]) * 17 / 255.0, 1};
    if (s.size() == 7)
      return Rgba{(hex(s[1]) * 16 + hex(s[2])) / 255.0, (hex(s[3]) * 16 + hex(s[4])) / 255.0,
                  (hex(s[5]) * 16 + hex(s[6])) / 255.0, 1};
    throw Error(ErrorKind::Parse, "bad color '" + s + "'");
  }
  if (s.rfind("rgb(", 0) == 0 && s.back() == ')') {
    const auto v = number_list(s.substr(4, s.size() - 5));
    if (v.size() != 3) throw Error(ErrorKind::Parse, "bad color '" + s + "'");
    return Rgba{v[0] / 255.0, v[1] / 255.0, v[2] / 255.0, 1};
  }
  const auto it = named_colors().find(s);
  if (it == named_colors().end()) throw Error(ErrorKind::Parse, "unsupported color '" + s + "'");
  return it->second;
}

struct Style {
  std::optional<Rgba> fill = Rgba{0, 0, 0, 1};
  double fill_opacity = 1.0;
  double opacity = 1.0;
};

using PTree = boost::property_tree::ptree;

inline void apply_style_property(Style& st, const std::string& key, const std::string& value) {
  if (key == "fill") {
    st.fill = parse_paint(value);
  } else if (key == "fill-opacity") {
    st.fill_opacity = std::stod(value);
  } else if (key == "opacity") {
    st.opacity *= std::stod(value);
  } else if (key == "fill-rule") {
    if (trim(value) != "nonzero") throw Error(ErrorKind::Parse, "unsupported feature: fill-rule " + value);
  } else if (key == "stroke") {
    if (trim(value) != "none") throw Error(ErrorKind::Parse, "unsupported feature: stroke");
  } else if (key == "filter" || key == "mask" || key == "clip-path") {
    if (trim(value) != "none") throw Error(ErrorKind::Parse, "unsupported feature: " + key);
  }
  // Presentation properties without geometric effect (display hints, ids) are ignored.
}

inline Style inherit_style(Style st, const PTree& attrs) {
  for (const auto& [key, node] : attrs) {
    if (key == "style") {
      std::stringstream ss(node.data());
      std::string decl;
      while (std::getline(ss, decl, ';')) {
        const auto colon = decl.find(':');
        if (colon == std::string::npos) continue;
        apply_style_property(st, trim(decl.substr(0, colon)), trim(decl.substr(colon + 1)));
      }
    } else {
      apply_style_property(st, key, node.data());
    }
  }
  return st;
}

inline double parse_length(const std::string& s) {
  std::string t = trim(s);
  if (t.size() > 2 && t.substr(t.size() - 2) == "px") t.resize(t.size() - 2);
  if (!t.empty() && t.back() == '%') throw Error(ErrorKind::Parse, "unsupported feature: percentage canvas size");
  return std::stod(t);
}

inline void reject_unsupported(const std::string& tag) {
  static const char* const kIgnored[] = {"title", "desc", "metadata", "<xmlcomment>", "<xmlattr>", "sodipodi:namedview"};
  for (const char* ok : kIgnored)
    if (tag == ok) return;
  if (tag == "linearGradient" || tag == "radialGradient")
    throw Error(ErrorKind::Parse, "unsupported feature: gradient <" + tag + ">");
  throw Error(ErrorKind::Parse, "unsupported feature: <" + tag + ">");
}

inline void collect(const PTree& node, const Affine2& xf, const Style& st, std::vector<VectorPath>& out) {
  for (const auto& [tag, child] : node) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "g" || tag == "path") {
      const auto attrs = child.get_child_optional("<xmlattr>");
      const PTree empty;
      const PTree& a = attrs ? *attrs : empty;
      Affine2 m = xf;
      if (auto t = a.get_optional<std::string>("transform")) m = xf * parse_transform(*t);
      const Style s = inherit_style(st, a);
      if (tag == "g") {
        collect(child, m, s, out);
        continue;
      }
      VectorPath p;
      p.subpaths = parse_path_data(a.get<std::string>("d", ""), m);
      if (s.fill) {
        p.fill = *s.fill;
        p.fill.a *= s.fill_opacity * s.opacity;
      } else {
        p.fill = {0, 0, 0, 0};
      }
      if (!p.subpaths.empty()) out.push_back(std::move(p));
    } else if (tag == "defs") {
      for (const auto& [dtag, dchild] : child) {
        (void)dchild;
        if (dtag != "<xmlattr>" && dtag != "<xmlcomment>") reject_unsupported(dtag);
      }
    } else {
      reject_unsupported(tag);
    }
  }
}

inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string format_color(const Rgba& c) {
  auto byte = [](double v) { return static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", byte(c.r), byte(c.g), byte(c.b));
  return buf;
}

}  // namespace svg_detail

/// Reads the supported SVG subset: <svg>, <g>, <path> with M/L/H/V/C/S/Q/T/Z
/// data, solid fills, and transforms. One layer per top-level group; all
/// ungrouped top-level paths share one layer.
inline ClipartDocument parse_svg(const std::string& text) {
  using namespace svg_detail;
  PTree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::read_xml(in, tree, boost::property_tree::xml_parser::trim_whitespace);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ParseError(std::string("malformed markup: ") + e.message(), e.line());
  }
  const auto root = tree.get_child_optional("svg");
  if (!root) throw ParseError("missing <svg> root element", 0);
  const auto attrs = root->get_child_optional("<xmlattr>");
  const PTree empty;
  const PTree& a = attrs ? *attrs : empty;

  ClipartDocument doc;
  Affine2 view;
  const auto vb = a.get_optional<std::string>("viewBox");
  std::vector<double> box;
  if (vb) {
    box = number_list(*vb);
    if (box.size() != 4 || box[2] <= 0 || box[3] <= 0) throw ParseError("malformed viewBox", 0);
  }
  doc.width = a.get_optional<std::string>("width") ? parse_length(a.get<std::string>("width"))
                                                    : (vb ? box[2] : 0.0);
  doc.height = a.get_optional<std::string>("height") ? parse_length(a.get<std::string>("height"))
                                                      : (vb ? box[3] : 0.0);
  if (vb) view = Affine2::scale(doc.width / box[2], doc.height / box[3]) * Affine2::translate(-box[0], -box[1]);
  const Style base = inherit_style(Style{}, a);

  int ungrouped = -1;
  for (const auto& [tag, child] : *root) {
    if (tag == "<xmlattr>" || tag == "<xmlcomment>") continue;
    if (tag == "g") {
      Layer layer;
      layer.name = child.get<std::string>("<xmlattr>.id", "layer" + std::to_string(doc.layers.size()));
      PTree wrapper;
      wrapper.add_child("g", child);
      collect(wrapper, view, base, layer.paths);
      layer.z_order = static_cast<int>(doc.layers.size());
      doc.layers.push_back(std::move(layer));
    } else if (tag == "path") {
      if (ungrouped < 0) {
        ungrouped = static_cast<int>(doc.layers.size());
        doc.layers.push_back(Layer{"root", ungrouped, {}});
      }
      PTree wrapper;
      wrapper.add_child("path", child);
      collect(wrapper, view, base, doc.layers[ungrouped].paths);
    } else if (tag == "defs") {
      PTree wrapper;
      wrapper.add_child("defs", child);
      std::vector<VectorPath> none;
      collect(wrapper, view, base, none);
    } else {
      reject_unsupported(tag);
    }
  }
  doc.validate();
  return doc;
}

inline std::string path_data(const VectorPath& path) {
  using svg_detail::format_number;
  std::string d;
  auto put = [&](Vec2 p) {
    d += format_number(p.x);
    d += ' ';
    d += format_number(p.y);
  };
  for (const auto& s : path.subpaths) {
    if (s.points.empty()) continue;
    if (!d.empty()) d += ' ';
    d += "M ";
    put(s.points[0]);
    std::size_t seg = 0;
    s.for_each_segment([&](SegmentKind kind, const std::array<std::size_t, 4>& idx, std::size_t) {
      ++seg;
      const bool closing = s.closed && seg == s.kinds.size();
      if (kind == SegmentKind::Line) {
        if (closing) return;  // Z draws it
        d += " L ";
        put(s.points[idx[1]]);
      } else {
        d += " C ";
        put(s.points[idx[1]]);
        d += ' ';
        put(s.points[idx[2]]);
        d += ' ';
        put(s.points[idx[3]]);
      }
    });
    if (s.closed) d += " Z";
  }
  return d;
}

/// Writes the document as SVG 1.1 markup, one top-level <g> per layer in z order.
inline std::string serialize_svg(const ClipartDocument& doc) {
  using namespace svg_detail;
  std::vector<const Layer*> order;
  for (const auto& l : doc.layers) order.push_back(&l);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->z_order < b->z_order; });
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << format_number(doc.width)
     << "\" height=\"" << format_number(doc.height) << "\" viewBox=\"0 0 " << format_number(doc.width) << ' '
     << format_number(doc.height) << "\">\n";
  for (const Layer* l : order) {
    os << "  <g id=\"" << l->name << "\">\n";
    for (const auto& p : l->paths) {
      os << "    <path d=\"" << path_data(p) << "\"";
      if (p.fill.a <= 0.0) {
        os << " fill=\"none\"";
      } else {
        os << " fill=\"" << format_color(p.fill) << "\"";
        if (p.fill.a < 1.0) os << " fill-opacity=\"" << format_number(p.fill.a) << "\"";
      }
      os << "/>\n";
    }
    os << "  </g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace aniclip
