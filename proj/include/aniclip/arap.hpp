#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/triangulate.hpp"

namespace aniclip {

/// Output of one ARAP solve together with the intermediates the backward
/// pass needs.
struct ArapSolution {
  std::vector<Vec2> vertices;
  std::vector<Vec2> targets;
  std::vector<Vec2> fitted;             // step-1 (similarity) positions
  std::vector<std::array<double, 2>> similarity;  // per triangle (a, b)
  std::vector<std::array<double, 2>> rotation;    // per triangle (cos, sin)
  std::vector<char> degenerate;                   // rotation reused, no gradient
};

/// Two-step closed-form ARAP deformation (similarity fit, then rotation-only
/// fit) with handles as hard constraints. Factorizations depend only on the
/// mesh connectivity and the handle set, so one instance serves every frame.
class ArapFactorization {
 public:
  using SpMat = Eigen::SparseMatrix<double>;

  ArapFactorization(const TriangleMesh& mesh, std::vector<int> handles)
      : mesh_(std::make_shared<const TriangleMesh>(mesh)), handles_(std::move(handles)) {
    const int n = static_cast<int>(mesh.vertices.size());
    if (handles_.size() < 2) fail(ErrorKind::Rig, "ARAP needs at least two handles");
    slot_.assign(n, -1);
    for (std::size_t h = 0; h < handles_.size(); ++h) {
      const int v = handles_[h];
      if (v < 0 || v >= n) fail(ErrorKind::Rig, "ARAP handle index " + std::to_string(v) + " out of range");
      if (slot_[v] != -1) fail(ErrorKind::Rig, "ARAP handle " + std::to_string(v) + " listed twice");
      slot_[v] = -2 - static_cast<int>(h);
    }
    for (int v = 0; v < n; ++v)
      if (slot_[v] == -1) slot_[v] = static_cast<int>(free_.size()), free_.push_back(v);

    precompute_triangles();
    assemble_step1();
    assemble_step2();
  }

  const TriangleMesh& mesh() const { return *mesh_; }
  const std::vector<int>& handles() const { return handles_; }
  std::size_t free_count() const { return free_.size(); }

  ArapSolution solve(std::span<const Vec2> targets, const ArapSolution* previous = nullptr) const {
    const auto& V = mesh_->vertices;
    if (targets.size() != handles_.size())
      fail(ErrorKind::Numeric, "ARAP solve got " + std::to_string(targets.size()) + " targets for " +
                                   std::to_string(handles_.size()) + " handles");
    for (const Vec2& t : targets)
      if (!is_finite(t)) fail(ErrorKind::Numeric, "ARAP target is not finite");

    ArapSolution out;
    out.targets.assign(targets.begin(), targets.end());

    // Step 1: similarity-invariant fit.
    Eigen::VectorXd q(2 * handles_.size());
    for (std::size_t h = 0; h < handles_.size(); ++h) q[2 * h] = targets[h].x, q[2 * h + 1] = targets[h].y;
    const Eigen::VectorXd u = step1_.solve(-(G_fh_ * q));
    if (step1_.info() != Eigen::Success) fail(ErrorKind::Numeric, "ARAP step-1 back-substitution failed");
    out.fitted.resize(V.size());
    for (std::size_t v = 0; v < V.size(); ++v) {
      const int s = slot_[v];
      out.fitted[v] = s >= 0 ? Vec2{u[2 * s], u[2 * s + 1]} : targets[-2 - s];
    }

    // Per-triangle similarity, projected to a rotation.
    const std::size_t nt = tris_.size();
    out.similarity.resize(nt);
    out.rotation.resize(nt);
    out.degenerate.assign(nt, 0);
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& T = tris_[t];
      double a = 0, b = 0;
      for (int k = 0; k < 3; ++k) {
        const Vec2 p = out.fitted[T.v[k]];
        a += dot(T.r[k], p);
        b += cross(T.r[k], p);
      }
      a /= T.S;
      b /= T.S;
      out.similarity[t] = {a, b};
      const double scale = std::hypot(a, b);
      if (scale < 1e-9) {
        out.degenerate[t] = 1;
        out.rotation[t] = previous && previous->rotation.size() == nt ? previous->rotation[t]
                                                                       : std::array<double, 2>{1.0, 0.0};
      } else {
        out.rotation[t] = {a / scale, b / scale};
      }
    }

    // Step 2: rotation-only fit, one coordinate at a time.
    Eigen::VectorXd bx = Eigen::VectorXd::Zero(V.size()), by = Eigen::VectorXd::Zero(V.size());
    for (std::size_t t = 0; t < nt; ++t) {
      const auto& T = tris_[t];
      const auto [c, s] = out.rotation[t];
      for (int k = 0; k < 3; ++k) {
        const int i = T.v[k], j = T.v[(k + 1) % 3];
        const Vec2 e = T.e[k];
        const double dx = c * e.x - s * e.y, dy = s * e.x + c * e.y;
        bx[j] += T.w * dx, by[j] += T.w * dy;
        bx[i] -= T.w * dx, by[i] -= T.w * dy;
      }
    }
    Eigen::VectorXd qx(handles_.size()), qy(handles_.size());
    for (std::size_t h = 0; h < handles_.size(); ++h) qx[h] = targets[h].x, qy[h] = targets[h].y;
    Eigen::VectorXd rx(free_.size()), ry(free_.size());
    for (std::size_t f = 0; f < free_.size(); ++f) rx[f] = bx[free_[f]], ry[f] = by[free_[f]];
    rx -= H_fh_ * qx;
    ry -= H_fh_ * qy;
    const Eigen::VectorXd vx = step2_.solve(rx), vy = step2_.solve(ry);
    if (step2_.info() != Eigen::Success) fail(ErrorKind::Numeric, "ARAP step-2 back-substitution failed");

    out.vertices.resize(V.size());
    bool at_rest = true;
    for (std::size_t h = 0; h < handles_.size(); ++h) at_rest = at_rest && targets[h] == V[handles_[h]];
    for (std::size_t v = 0; v < V.size(); ++v) {
      const int s = slot_[v];
      out.vertices[v] = s >= 0 ? Vec2{vx[s], vy[s]} : targets[-2 - s];
    }
    if (at_rest) out.vertices = V;  // exact identity, not merely within round-off
    return out;
  }

  /// Gradient of a scalar loss w.r.t. the handle targets, given its gradient
  /// w.r.t. the output vertices of `sol`.
  std::vector<Vec2> backward(const ArapSolution& sol, std::span<const Vec2> targets,
                             std::span<const Vec2> upstream) const {
    const auto& V = mesh_->vertices;
    if (targets.size() != sol.targets.size() || !std::equal(targets.begin(), targets.end(), sol.targets.begin()))
      fail(ErrorKind::State, "ARAP backward called with targets that do not match the cached solve");
    if (upstream.size() != V.size()) fail(ErrorKind::State, "ARAP backward: upstream size mismatch");

    std::vector<Vec2> dq(handles_.size());
    Eigen::VectorXd gx(free_.size()), gy(free_.size());
    for (std::size_t v = 0; v < V.size(); ++v) {
      const int s = slot_[v];
      if (s >= 0) gx[s] = upstream[v].x, gy[s] = upstream[v].y;
      else dq[-2 - s] += upstream[v];
    }

    // Step 2 adjoint.
    const Eigen::VectorXd lx = step2_.solve(gx), ly = step2_.solve(gy);
    const Eigen::VectorXd hx = H_fh_.transpose() * lx, hy = H_fh_.transpose() * ly;
    for (std::size_t h = 0; h < handles_.size(); ++h) dq[h] -= Vec2{hx[h], hy[h]};
    auto lam = [&](int v) {
      const int s = slot_[v];
      return s >= 0 ? Vec2{lx[s], ly[s]} : Vec2{};
    };

    // Through the rotation normalization into the similarity fit.
    std::vector<Vec2> gfit(V.size());
    for (std::size_t t = 0; t < tris_.size(); ++t) {
      if (sol.degenerate[t]) continue;
      const auto& T = tris_[t];
      double dc = 0, ds = 0;
      for (int k = 0; k < 3; ++k) {
        const Vec2 dl = lam(T.v[(k + 1) % 3]) - lam(T.v[k]);
        const Vec2 e = T.e[k];
        dc += T.w * (dl.x * e.x + dl.y * e.y);
        ds += T.w * (-dl.x * e.y + dl.y * e.x);
      }
      const auto [a, b] = sol.similarity[t];
      const auto [c, s] = sol.rotation[t];
      const double rho = std::hypot(a, b);
      const double proj = c * dc + s * ds;
      const double da = (dc - c * proj) / rho, db = (ds - s * proj) / rho;
      for (int k = 0; k < 3; ++k) {
        const Vec2 r = T.r[k];
        gfit[T.v[k]] += Vec2{r.x * da - r.y * db, r.y * da + r.x * db} / T.S;
      }
    }

    // Step 1 adjoint.
    Eigen::VectorXd gf(2 * free_.size());
    for (std::size_t v = 0; v < V.size(); ++v) {
      const int s = slot_[v];
      if (s >= 0) gf[2 * s] = gfit[v].x, gf[2 * s + 1] = gfit[v].y;
      else dq[-2 - s] += gfit[v];
    }
    const Eigen::VectorXd mu = step1_.solve(gf);
    const Eigen::VectorXd back = G_fh_.transpose() * mu;
    for (std::size_t h = 0; h < handles_.size(); ++h) dq[h] -= Vec2{back[2 * h], back[2 * h + 1]};
    return dq;
  }

 private:
  struct Tri {
    std::array<int, 3> v;
    std::array<Vec2, 3> r;  // rest positions relative to the centroid
    std::array<Vec2, 3> e;  // rest edge k: v[k] -> v[k+1]
    double S = 0;           // Σ |r|²
    double w = 0;           // rest area
  };

  std::shared_ptr<const TriangleMesh> mesh_;
  std::vector<int> handles_;
  std::vector<int> slot_;  // >= 0: free index; else -2 - handle index
  std::vector<int> free_;
  std::vector<Tri> tris_;
  SpMat G_fh_, H_fh_;
  Eigen::SimplicialLDLT<SpMat> step1_, step2_;

  void precompute_triangles() {
    const auto& V = mesh_->vertices;
    for (std::size_t t = 0; t < mesh_->triangles.size(); ++t) {
      const auto& f = mesh_->triangles[t];
      Tri T;
      T.v = f;
      T.w = mesh_->triangle_area(t);
      if (!(T.w > 0)) fail(ErrorKind::Rig, "ARAP: triangle " + std::to_string(t) + " has non-positive area");
      const Vec2 c = (V[f[0]] + V[f[1]] + V[f[2]]) / 3.0;
      for (int k = 0; k < 3; ++k) {
        T.r[k] = V[f[k]] - c;
        T.S += norm2(T.r[k]);
        T.e[k] = V[f[(k + 1) % 3]] - V[f[k]];
      }
      tris_.push_back(T);
    }
  }

  void assemble_step1() {
    const auto& V = mesh_->vertices;
    const int n = static_cast<int>(V.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (const Tri& T : tris_) {
      for (int k = 0; k < 3; ++k) {
        // v2 predicted from the edge v0 -> v1 in local coordinates (x, y).
        const int i0 = T.v[k], i1 = T.v[(k + 1) % 3], i2 = T.v[(k + 2) % 3];
        const Vec2 e = V[i1] - V[i0], d = V[i2] - V[i0];
        const double l2 = norm2(e);
        const double x = dot(d, e) / l2, y = cross(e, d) / l2;
        // residual = v2 - (1-x) v0 - x v1 - y R90 (v1 - v0), as a 2x6 block
        Eigen::Matrix<double, 2, 6> A;
        A << -(1 - x), -y, -x, y, 1, 0,
              y, -(1 - x), -y, -x, 0, 1;
        const Eigen::Matrix<double, 6, 6> M = T.w * (A.transpose() * A);
        const int idx[3] = {i0, i1, i2};
        for (int r = 0; r < 6; ++r)
          for (int c = 0; c < 6; ++c)
            if (M(r, c) != 0.0) trip.emplace_back(2 * idx[r / 2] + r % 2, 2 * idx[c / 2] + c % 2, M(r, c));
      }
    }
    SpMat G(2 * n, 2 * n);
    G.setFromTriplets(trip.begin(), trip.end());
    split(G, 2, step1_, G_fh_, "step-1");
  }

  void assemble_step2() {
    const int n = static_cast<int>(mesh_->vertices.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (const Tri& T : tris_)
      for (int k = 0; k < 3; ++k) {
        const int i = T.v[k], j = T.v[(k + 1) % 3];
        trip.emplace_back(i, i, T.w);
        trip.emplace_back(j, j, T.w);
        trip.emplace_back(i, j, -T.w);
        trip.emplace_back(j, i, -T.w);
      }
    SpMat H(n, n);
    H.setFromTriplets(trip.begin(), trip.end());
    split(H, 1, step2_, H_fh_, "step-2");
  }

  /// Partitions a (dim-interleaved) system into free/free and free/handle
  /// blocks and factorizes the former.
  void split(const SpMat& A, int dim, Eigen::SimplicialLDLT<SpMat>& solver, SpMat& Afh, const char* what) {
    const int nf = static_cast<int>(free_.size()), nh = static_cast<int>(handles_.size());
    std::vector<Eigen::Triplet<double>> ff, fh;
    for (int col = 0; col < A.outerSize(); ++col)
      for (SpMat::InnerIterator it(A, col); it; ++it) {
        const int rv = slot_[it.row() / dim], cv = slot_[it.col() / dim];
        const int rd = static_cast<int>(it.row()) % dim, cd = static_cast<int>(it.col()) % dim;
        if (rv < 0) continue;
        if (cv >= 0) ff.emplace_back(dim * rv + rd, dim * cv + cd, it.value());
        else fh.emplace_back(dim * rv + rd, dim * (-2 - cv) + cd, it.value());
      }
    SpMat Aff(dim * nf, dim * nf);
    Aff.setFromTriplets(ff.begin(), ff.end());
    Afh = SpMat(dim * nf, dim * nh);
    Afh.setFromTriplets(fh.begin(), fh.end());
    if (nf == 0) return;
    solver.compute(Aff);
    if (solver.info() != Eigen::Success) fail(ErrorKind::Numeric, std::string("ARAP ") + what + " system is singular");
    const auto& D = solver.vectorD();
    if (D.minCoeff() <= 1e-14 * std::max(1.0, D.maxCoeff()))
      fail(ErrorKind::Numeric, std::string("ARAP ") + what + " system is singular (degenerate mesh)");
  }
};

/// Linear blend skinning: each vertex follows the weighted sum of keypoint
/// displacements.
inline std::vector<Vec2> lbs_solve(const TriangleMesh& mesh, const Eigen::MatrixXd& weights,
                                   std::span<const Vec2> rest_keypoints, std::span<const Vec2> targets) {
  if (weights.rows() != static_cast<Eigen::Index>(mesh.vertices.size()) ||
      weights.cols() != static_cast<Eigen::Index>(targets.size()) || rest_keypoints.size() != targets.size())
    fail(ErrorKind::State, "linear blend: weight matrix does not match mesh and keypoints");
  std::vector<Vec2> out = mesh.vertices;
  for (std::size_t v = 0; v < out.size(); ++v)
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const double w = weights(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(k));
      if (w != 0.0) out[v] += w * (targets[k] - rest_keypoints[k]);
    }
  return out;
}

/// Transpose of lbs_solve's Jacobian applied to `upstream`.
inline std::vector<Vec2> lbs_backward(const Eigen::MatrixXd& weights, std::span<const Vec2> upstream) {
  std::vector<Vec2> out(static_cast<std::size_t>(weights.cols()));
  for (Eigen::Index v = 0; v < weights.rows(); ++v)
    for (Eigen::Index k = 0; k < weights.cols(); ++k) out[k] += weights(v, k) * upstream[v];
  return out;
}

}  // namespace aniclip
