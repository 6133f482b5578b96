#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "aniclip/contour.hpp"
#include "aniclip/document.hpp"

namespace aniclip {

using Bone = std::pair<int, int>;

/// Keypoints and bones. `rest_lengths[b]` belongs to `bones[b]`.
struct Skeleton {
  std::vector<Vec2> keypoints;
  std::vector<Bone> bones;
  std::vector<double> rest_lengths;
  std::vector<std::string> warnings;

  void recompute_rest_lengths() {
    rest_lengths.clear();
    for (auto [i, j] : bones) rest_lengths.push_back(distance(keypoints[i], keypoints[j]));
  }

  bool connected() const {
    if (keypoints.empty()) return false;
    std::vector<int> parent(keypoints.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (auto [i, j] : bones) parent[find(i)] = find(j);
    const int root = find(0);
    for (std::size_t k = 0; k < keypoints.size(); ++k)
      if (find(static_cast<int>(k)) != root) return false;
    return true;
  }

  void validate() const {
    const int m = static_cast<int>(keypoints.size());
    if (m == 0) fail(ErrorKind::Rig, "skeleton has no keypoints");
    if (rest_lengths.size() != bones.size()) fail(ErrorKind::Rig, "skeleton rest lengths out of sync");
    for (std::size_t b = 0; b < bones.size(); ++b) {
      auto [i, j] = bones[b];
      if (i < 0 || j < 0 || i >= m || j >= m || i == j)
        fail(ErrorKind::Rig, "bone " + std::to_string(b) + " has invalid indices");
      if (!(rest_lengths[b] > 0)) fail(ErrorKind::Rig, "bone " + std::to_string(b) + " has zero rest length");
    }
    if (!connected()) fail(ErrorKind::Rig, "skeleton bone graph is disconnected");
  }
};

/// Wavefront-propagation skeleton: contour vertices (time 0) and interior
/// collapse nodes joined by arcs.
struct StraightSkeleton {
  struct Node {
    Vec2 position;
    double time = 0;           // offset distance at which the node formed
    bool on_contour = false;
    std::vector<int> lines;    // contour edge ids whose offset lines pass through the node
  };
  std::vector<Node> nodes;
  std::vector<Bone> arcs;
  /// Offset lines of the input contour edges: dot(normal, x) == offset + time.
  std::vector<std::pair<Vec2, double>> edge_lines;
};

namespace skeleton_detail {

struct WaveVertex {
  Vec2 origin;
  double t0 = 0;
  Vec2 velocity;
  int in_line = -1, out_line = -1;
  int prev = -1, next = -1;
  int node = -1;
  bool alive = true;
  bool spike = false;

  Vec2 at(double t) const { return origin + (t - t0) * velocity; }
};

enum class EventKind { Edge = 0, Split = 1 };

struct Event {
  double time = std::numeric_limits<double>::infinity();
  Vec2 point;
  EventKind kind = EventKind::Edge;
  int vertex = -1;  // edge event: edge (vertex -> next); split: reflex vertex
  int edge = -1;    // split: edge (edge -> next) being hit

  bool before(const Event& o) const {
    return std::tie(time, point.x, point.y, kind, vertex, edge) <
           std::tie(o.time, o.point.x, o.point.y, o.kind, o.vertex, o.edge);
  }
};

class Propagator {
 public:
  explicit Propagator(const std::vector<Vec2>& ring) {
    const std::size_t n = ring.size();
    diag_ = bounds_of(ring).diagonal();
    eps_ = 1e-10 * diag_;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 a = ring[i], b = ring[(i + 1) % n];
      const Vec2 nrm = perp(normalized(b - a));
      out_.edge_lines.push_back({nrm, dot(nrm, a)});
    }
    for (std::size_t i = 0; i < n; ++i) {
      StraightSkeleton::Node node{ring[i], 0.0, true, {static_cast<int>((i + n - 1) % n), static_cast<int>(i)}};
      out_.nodes.push_back(node);
      WaveVertex v;
      v.origin = ring[i];
      v.in_line = static_cast<int>((i + n - 1) % n);
      v.out_line = static_cast<int>(i);
      v.prev = static_cast<int>((i + n - 1) % n);
      v.next = static_cast<int>((i + 1) % n);
      v.node = static_cast<int>(i);
      verts_.push_back(v);
      set_velocity(static_cast<int>(i));
    }
  }

  StraightSkeleton run() {
    const std::size_t cap = 20 * verts_.size() + 100;
    for (std::size_t iter = 0; iter < cap; ++iter) {
      if (std::none_of(verts_.begin(), verts_.end(), [](const WaveVertex& v) { return v.alive; })) {
        dedupe_arcs();
        return std::move(out_);
      }
      const Event ev = next_event();
      if (!std::isfinite(ev.time)) {
        // No further events: close whatever remains at the current time.
        for (std::size_t i = 0; i < verts_.size(); ++i)
          if (verts_[i].alive) finalize_ring(static_cast<int>(i));
        continue;
      }
      now_ = std::max(now_, ev.time);
      if (ev.kind == EventKind::Edge) {
        handle_edge(ev);
      } else {
        handle_split(ev);
      }
    }
    fail(ErrorKind::Rig, "straight skeleton did not converge");
  }

 private:
  StraightSkeleton out_;
  std::vector<WaveVertex> verts_;
  double now_ = 0.0;
  double diag_ = 1.0;
  double eps_ = 1e-10;

  Vec2 normal(int line) const { return out_.edge_lines[line].first; }
  double offset(int line) const { return out_.edge_lines[line].second; }

  void set_velocity(int vi) {
    WaveVertex& v = verts_[vi];
    const Vec2 n1 = normal(v.in_line), n2 = normal(v.out_line);
    const double det = cross(n1, n2);
    v.spike = false;
    if (std::abs(det) < 1e-12) {
      if (dot(n1, n2) > 0) {
        v.velocity = n1;
      } else {
        v.velocity = {};
        v.spike = true;
      }
      return;
    }
    v.velocity = Vec2{n2.y - n1.y, n1.x - n2.x} / det;
  }

  /// Direction of travel along a contour edge (the normal is its left perpendicular).
  Vec2 direction(int line) const { return -perp(normal(line)); }

  bool reflex(int vi) const {
    const WaveVertex& v = verts_[vi];
    return cross(direction(v.in_line), direction(v.out_line)) < -1e-12;
  }

  int node_at(Vec2 p, double time, std::initializer_list<int> lines) {
    const double tol = 1e-9 * diag_;
    for (std::size_t i = 0; i < out_.nodes.size(); ++i) {
      auto& nd = out_.nodes[i];
      if (!nd.on_contour && distance(nd.position, p) <= tol && std::abs(nd.time - time) <= tol) {
        for (int l : lines)
          if (std::find(nd.lines.begin(), nd.lines.end(), l) == nd.lines.end()) nd.lines.push_back(l);
        return static_cast<int>(i);
      }
    }
    out_.nodes.push_back({p, time, false, std::vector<int>(lines)});
    return static_cast<int>(out_.nodes.size() - 1);
  }

  void arc(int a, int b) {
    if (a != b) out_.arcs.push_back({std::min(a, b), std::max(a, b)});
  }

  Event next_event() const {
    Event best;
    for (std::size_t i = 0; i < verts_.size(); ++i) {
      const WaveVertex& a = verts_[i];
      if (!a.alive) continue;
      const WaveVertex& b = verts_[a.next];
      // Edge event: a and b meet.
      {
        const Vec2 e = direction(a.out_line);
        const Vec2 pa = a.at(now_), pb = b.at(now_);
        const double len = dot(pb - pa, e);
        const double closing = dot(b.velocity - a.velocity, e);
        Event ev;
        ev.kind = EventKind::Edge;
        ev.vertex = static_cast<int>(i);
        if (distance(pa, pb) <= eps_) {
          ev.time = now_;
          ev.point = pa;
        } else if (closing < -1e-12 && len > -eps_) {
          ev.time = now_ + std::max(len, 0.0) / -closing;
          ev.point = a.at(ev.time);
        }
        if (std::isfinite(ev.time) && ev.before(best)) best = ev;
      }
      // Split event: reflex vertex a hits a non-incident edge of its ring.
      if (!reflex(static_cast<int>(i))) continue;
      const Vec2 pr = a.at(now_);
      for (int j = a.next; j != a.prev; j = verts_[j].next) {
        const WaveVertex& s = verts_[j];
        const WaveVertex& t = verts_[s.next];
        const int line = s.out_line;
        const Vec2 n = normal(line);
        const double dist = dot(n, pr) - offset(line) - now_;
        const double approach = 1.0 - dot(n, a.velocity);
        if (approach <= 1e-12 || dist < -eps_) continue;
        const double tc = now_ + std::max(dist, 0.0) / approach;
        const Vec2 x = a.at(tc);
        const Vec2 ps = s.at(tc), pt = t.at(tc);
        const Vec2 e = direction(line);
        const double along = dot(x - ps, e);
        const double len = dot(pt - ps, e);
        if (len <= eps_ || along < -eps_ || along > len + eps_) continue;
        Event ev;
        ev.kind = EventKind::Split;
        ev.time = tc;
        ev.point = x;
        ev.vertex = static_cast<int>(i);
        ev.edge = j;
        if (ev.before(best)) best = ev;
      }
    }
    return best;
  }

  void handle_edge(const Event& ev) {
    const int ia = ev.vertex, ib = verts_[ia].next;
    WaveVertex a = verts_[ia], b = verts_[ib];
    if (a.prev == ib) {  // two-vertex ring
      finalize_ring(ia);
      return;
    }
    const int node = node_at(ev.point, ev.time, {a.in_line, a.out_line, b.out_line});
    arc(a.node, node);
    arc(b.node, node);
    verts_[ia].alive = verts_[ib].alive = false;
    WaveVertex c;
    c.origin = ev.point;
    c.t0 = ev.time;
    c.in_line = a.in_line;
    c.out_line = b.out_line;
    c.prev = a.prev;
    c.next = b.next;
    c.node = node;
    const int ic = static_cast<int>(verts_.size());
    verts_.push_back(c);
    verts_[c.prev].next = ic;
    verts_[c.next].prev = ic;
    set_velocity(ic);
    settle(ic);
  }

  void handle_split(const Event& ev) {
    const int ir = ev.vertex, is = ev.edge, it = verts_[is].next;
    const WaveVertex r = verts_[ir];
    const int hit_line = verts_[is].out_line;
    const int node = node_at(ev.point, ev.time, {r.in_line, r.out_line, hit_line});
    arc(r.node, node);
    verts_[ir].alive = false;
    // Ring A: r.prev -> x1 -> t ... ; Ring B: s -> x2 -> r.next ...
    WaveVertex x1, x2;
    x1.origin = x2.origin = ev.point;
    x1.t0 = x2.t0 = ev.time;
    x1.node = x2.node = node;
    x1.in_line = r.in_line;
    x1.out_line = hit_line;
    x1.prev = r.prev;
    x1.next = it;
    x2.in_line = hit_line;
    x2.out_line = r.out_line;
    x2.prev = is;
    x2.next = r.next;
    const int i1 = static_cast<int>(verts_.size());
    verts_.push_back(x1);
    const int i2 = static_cast<int>(verts_.size());
    verts_.push_back(x2);
    verts_[r.prev].next = i1;
    verts_[it].prev = i1;
    verts_[is].next = i2;
    verts_[r.next].prev = i2;
    set_velocity(i1);
    set_velocity(i2);
    settle(i1);
    settle(i2);
  }

  /// Resolves spikes (antiparallel neighbours) and closes degenerate rings
  /// reachable from vertex `vi`.
  void settle(int vi) {
    for (int guard = 0; guard < 100000 && vi >= 0 && verts_[vi].alive; ++guard) {
      if (ring_size(vi) <= 2 || std::abs(ring_area(vi)) <= 1e-9 * diag_ * diag_) {
        finalize_ring(vi);
        return;
      }
      const int spike = find_spike(vi);
      if (spike < 0) return;
      vi = retract_spike(spike);
    }
  }

  int ring_size(int vi) const {
    int n = 1;
    for (int j = verts_[vi].next; j != vi; j = verts_[j].next) ++n;
    return n;
  }

  double ring_area(int vi) const {
    std::vector<Vec2> pts;
    int j = vi;
    do {
      pts.push_back(verts_[j].at(now_));
      j = verts_[j].next;
    } while (j != vi);
    return signed_area(pts);
  }

  int find_spike(int vi) const {
    int j = vi;
    do {
      if (verts_[j].spike) return j;
      j = verts_[j].next;
    } while (j != vi);
    return -1;
  }

  /// The tip of a zero-width spike sweeps back to its nearer neighbour instantly.
  int retract_spike(int iv) {
    WaveVertex v = verts_[iv];
    const Vec2 pv = v.at(now_);
    const int ip = v.prev, iq = v.next;
    const double dp = distance(pv, verts_[ip].at(now_)), dq = distance(pv, verts_[iq].at(now_));
    const int keep = dp <= dq ? ip : iq;
    WaveVertex& k = verts_[keep];
    const Vec2 pk = k.at(now_);
    const int node = node_at(pk, now_, {v.in_line, v.out_line, k.in_line, k.out_line});
    arc(v.node, node);
    arc(k.node, node);
    verts_[iv].alive = false;
    k.origin = pk;
    k.t0 = now_;
    k.node = node;
    if (keep == ip) {
      k.out_line = v.out_line;
      k.next = iq;
      verts_[iq].prev = ip;
    } else {
      k.in_line = v.in_line;
      k.prev = ip;
      verts_[ip].next = iq;
    }
    set_velocity(keep);
    return keep;
  }

  void finalize_ring(int vi) {
    std::vector<int> ring;
    int j = vi;
    do {
      ring.push_back(j);
      j = verts_[j].next;
    } while (j != vi && ring.size() <= verts_.size());
    std::vector<int> terminal;
    for (int k : ring) {
      WaveVertex& v = verts_[k];
      const int node = node_at(v.at(now_), now_, {v.in_line, v.out_line});
      arc(v.node, node);
      terminal.push_back(node);
      v.alive = false;
    }
    for (std::size_t k = 0; k < terminal.size(); ++k) arc(terminal[k], terminal[(k + 1) % terminal.size()]);
  }

  void dedupe_arcs() {
    std::sort(out_.arcs.begin(), out_.arcs.end());
    out_.arcs.erase(std::unique(out_.arcs.begin(), out_.arcs.end()), out_.arcs.end());
  }
};

}  // namespace skeleton_detail

/// Straight skeleton of a simple polygon without holes (outer ring CCW).
inline StraightSkeleton straight_skeleton(const Polygon& poly) {
  if (!poly.holes.empty()) fail(ErrorKind::Rig, "straight skeleton does not support polygons with holes");
  std::vector<Vec2> ring = clean_ring(poly.vertices);
  const double diag = bounds_of(ring).diagonal();
  if (ring.size() < 3 || std::abs(signed_area(ring)) < 1e-12 * std::max(diag * diag, 1e-300))
    fail(ErrorKind::Rig, "degenerate polygon");
  if (signed_area(ring) < 0) std::reverse(ring.begin(), ring.end());
  return skeleton_detail::Propagator(ring).run();
}

/// Removes arcs touching contour vertices; keeps the largest connected interior component.
inline Skeleton prune_outer_bones(const StraightSkeleton& raw) {
  Skeleton sk;
  std::vector<Bone> inner;
  for (auto [a, b] : raw.arcs)
    if (!raw.nodes[a].on_contour && !raw.nodes[b].on_contour) inner.push_back({a, b});

  if (inner.empty()) {
    int deepest = -1;
    for (std::size_t i = 0; i < raw.nodes.size(); ++i)
      if (!raw.nodes[i].on_contour && (deepest < 0 || raw.nodes[i].time > raw.nodes[deepest].time))
        deepest = static_cast<int>(i);
    if (deepest < 0) fail(ErrorKind::Rig, "straight skeleton has no interior node");
    sk.keypoints = {raw.nodes[deepest].position};
    sk.warnings.push_back("pruning removed every bone; single keypoint skeleton");
    return sk;
  }

  const int n = static_cast<int>(raw.nodes.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : inner) parent[find(a)] = find(b);
  std::vector<int> comp_size(n, 0);
  std::vector<double> comp_len(n, 0.0);
  std::set<int> used;
  for (auto [a, b] : inner) used.insert(a), used.insert(b);
  for (int u : used) ++comp_size[find(u)];
  for (auto [a, b] : inner) comp_len[find(a)] += distance(raw.nodes[a].position, raw.nodes[b].position);
  int best = -1, components = 0;
  for (int u : used) {
    if (find(u) != u) continue;
    ++components;
    if (best < 0 || std::tie(comp_size[u], comp_len[u]) > std::tie(comp_size[best], comp_len[best])) best = u;
  }
  if (components > 1) sk.warnings.push_back("pruning disconnected the skeleton; kept the largest component");

  std::vector<int> remap(n, -1);
  for (int u : used)
    if (find(u) == best) {
      remap[u] = static_cast<int>(sk.keypoints.size());
      sk.keypoints.push_back(raw.nodes[u].position);
    }
  for (auto [a, b] : inner)
    if (remap[a] >= 0 && remap[b] >= 0 && distance(raw.nodes[a].position, raw.nodes[b].position) > 0)
      sk.bones.push_back({remap[a], remap[b]});
  sk.recompute_rest_lengths();
  return sk;
}

/// Collapse threshold: rho times the mean bone length.
inline double collapse_threshold(const Skeleton& sk, double rho) {
  if (sk.bones.empty()) return 0.0;
  double sum = 0.0;
  for (auto [i, j] : sk.bones) sum += distance(sk.keypoints[i], sk.keypoints[j]);
  return rho * sum / static_cast<double>(sk.bones.size());
}

/// Iterative edge collapse: merge the shortest bone shorter than the current
/// threshold at its midpoint, recompute the threshold, repeat.
inline Skeleton simplify_skeleton(Skeleton sk, double rho) {
  if (!(rho > 0)) fail(ErrorKind::Config, "rho must be positive");
  while (!sk.bones.empty()) {
    const double delta = collapse_threshold(sk, rho);
    std::size_t shortest = 0;
    double len = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < sk.bones.size(); ++b) {
      const double l = distance(sk.keypoints[sk.bones[b].first], sk.keypoints[sk.bones[b].second]);
      if (l < len) len = l, shortest = b;
    }
    if (!(len < delta)) break;
    auto [keep, drop] = sk.bones[shortest];
    if (keep > drop) std::swap(keep, drop);
    sk.keypoints[keep] = 0.5 * (sk.keypoints[keep] + sk.keypoints[drop]);
    sk.keypoints.erase(sk.keypoints.begin() + drop);
    std::set<Bone> next;
    for (auto [i, j] : sk.bones) {
      auto fix = [&](int k) { return k == drop ? keep : (k > drop ? k - 1 : k); };
      const int a = fix(i), b = fix(j);
      if (a != b) next.insert({std::min(a, b), std::max(a, b)});
    }
    sk.bones.assign(next.begin(), next.end());
  }
  sk.recompute_rest_lengths();
  return sk;
}

}  // namespace aniclip
