#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "aniclip/contour.hpp"
#include "aniclip/render.hpp"
#include "fixtures.hpp"

using namespace aniclip;

namespace {

struct VectorRig {
  ClipartDocument doc;
  TriangleMesh mesh;
  BarycentricBinding binding;
  VectorScene scene;
};

VectorRig vector_rig(double size, int res) {
  VectorRig r;
  r.doc = fixtures::two_layer_doc(size);
  const auto contour = extract_contour(r.doc, 0.01 * size / 64);
  Polygon poly = contour.polygon;
  poly.vertices = simplify_ring(poly.vertices, 0.02 * size / 64);
  r.mesh = triangulate(poly, std::vector<Vec2>{}, 20.0, 40.0 * (size / 64) * (size / 64));
  r.binding = bind_points_extrapolated(r.mesh, r.doc.control_points());
  r.scene = prepare_scene(r.doc, res, res);
  return r;
}

struct BitmapRig {
  RasterImage image;
  TriangleMesh mesh;
};

BitmapRig bitmap_rig(int size, double max_area) {
  BitmapRig r;
  r.image = fixtures::textured_disc(size, size, {size / 2.0, size / 2.0}, size * 0.35);
  Polygon poly = trace_bitmap(r.image, 0.5).polygon;
  poly.vertices = simplify_ring(poly.vertices, 0.75);
  r.mesh = triangulate(poly, std::vector<Vec2>{}, 20.0, max_area);
  return r;
}

Vec2 rotate_about(Vec2 p, Vec2 c, double ang) {
  const double cs = std::cos(ang), sn = std::sin(ang);
  const Vec2 d = p - c;
  return c + Vec2{cs * d.x - sn * d.y, sn * d.x + cs * d.y};
}

double pixel_sum(const FrameBuffer& f) {
  double s = 0;
  for (double v : f.pixels) s += v;
  return s;
}

}  // namespace

TEST(VectorRender, IdentityWarpIsBitExact) {
  const auto r = vector_rig(64, 64);
  const auto direct = render_scene(r.scene, r.doc.control_points());
  const auto warped = render_vector(r.scene, r.binding, r.mesh, r.mesh.vertices);
  EXPECT_TRUE(warped.inverted.empty());
  EXPECT_EQ(warped.frame, direct);
  // Something was actually drawn in every fill colour.
  EXPECT_LT(direct.px(32, 32)[0], 0.95);
  EXPECT_NEAR(direct.px(50, 31)[0], 0.8, 1e-12);
}

TEST(VectorRender, IntegerTranslationShiftsInteriorExactly) {
  const auto r = vector_rig(128, 128);
  std::vector<Vec2> moved = r.mesh.vertices;
  for (auto& v : moved) v += Vec2{10, 0};
  const auto a = render_scene(r.scene, r.doc.control_points());
  const auto b = render_vector(r.scene, r.binding, r.mesh, moved).frame;
  int compared = 0;
  for (int y = 1; y < 127; ++y)
    for (int x = 1; x < 117; ++x) {
      bool interior = true;
      for (int dy = -1; dy <= 1 && interior; ++dy)
        for (int dx = -1; dx <= 1 && interior; ++dx)
          for (int c = 0; c < 3; ++c) interior = interior && a.px(x + dx, y + dy)[c] == a.px(x, y)[c];
      if (!interior) continue;
      ++compared;
      for (int c = 0; c < 3; ++c) ASSERT_EQ(b.px(x + 10, y)[c], a.px(x, y)[c]) << x << "," << y;
    }
  EXPECT_GT(compared, 10000);
}

TEST(VectorRender, HalfScaleQuartersArea) {
  ClipartDocument doc;
  doc.width = doc.height = 256;
  doc.layers.push_back({"disc", 0, {{{fixtures::circle({128, 128}, 80)}, {0, 0, 0, 1}}}});
  const auto poly = extract_contour(doc, 0.05).polygon;
  const auto mesh = triangulate(poly, std::vector<Vec2>{}, 20.0, 400.0);
  const auto binding = bind_points_extrapolated(mesh, doc.control_points());
  const auto scene = prepare_scene(doc, 256, 256);
  std::vector<Vec2> half = mesh.vertices;
  for (auto& v : half) v = Vec2{128, 128} + 0.5 * (v - Vec2{128, 128});
  auto coverage = [](const FrameBuffer& f) {
    double s = 0;
    for (std::size_t i = 0; i < f.pixel_count(); ++i) s += 1.0 - f.pixels[3 * i];
    return s;
  };
  const double full = coverage(render_vector(scene, binding, mesh, mesh.vertices).frame);
  const double small = coverage(render_vector(scene, binding, mesh, half).frame);
  EXPECT_NEAR(small / full, 0.25, 0.02 * 0.25);
}

TEST(VectorRender, ReportsInvertedTriangles) {
  const auto r = vector_rig(64, 64);
  std::vector<Vec2> flipped = r.mesh.vertices;
  for (auto& v : flipped) v.x = 64 - v.x;
  const auto out = render_vector(r.scene, r.binding, r.mesh, flipped);
  EXPECT_EQ(out.inverted.size(), r.mesh.triangles.size());
  EXPECT_EQ(out.frame.width, 64);
}

TEST(VectorRender, ZeroUpstreamGivesZeroGradient) {
  const auto r = vector_rig(64, 64);
  VectorTape tape;
  render_scene(r.scene, r.doc.control_points(), &tape);
  const FrameBuffer up(64, 64, 0.0);
  for (Vec2 g : scene_backward(r.scene, tape, up)) EXPECT_EQ(g, Vec2{});
}

TEST(VectorRender, BackwardMatchesAreaDerivative) {
  // Black square on white: sum of pixels = const − 3·area, so the gradient
  // of the sum w.r.t. a corner is −3 · ∂area/∂corner.
  ClipartDocument doc;
  doc.width = doc.height = 128;
  const std::vector<Vec2> sq{{30.3, 20.7}, {100.2, 30.1}, {90.6, 105.4}, {20.9, 95.2}};
  doc.layers.push_back({"sq", 0, {{{fixtures::polyline(sq)}, {0, 0, 0, 1}}}});
  const auto scene = prepare_scene(doc, 128, 128);
  VectorTape tape;
  render_scene(scene, doc.control_points(), &tape);
  const FrameBuffer up(128, 128, 1.0);
  const auto g = scene_backward(scene, tape, up);
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const Vec2 prev = sq[(i + 3) % 4], next = sq[(i + 1) % 4];
    // ∂(shoelace area)/∂p_i = ½ (next.y − prev.y, prev.x − next.x) for a CCW ring in y-down coordinates.
    const double s = signed_area(sq) >= 0 ? 1.0 : -1.0;
    const Vec2 darea = 0.5 * s * Vec2{next.y - prev.y, prev.x - next.x};
    EXPECT_NEAR(g[i].x, -3.0 * darea.x, 0.05 * norm(3.0 * darea));
    EXPECT_NEAR(g[i].y, -3.0 * darea.y, 0.05 * norm(3.0 * darea));
  }
}

TEST(BitmapRender, IdentityReproducesSourceOnSupport) {
  const auto r = bitmap_rig(48, 12.0);
  BitmapTape tape;
  const BitmapSource src(r.image);
  const auto out = render_bitmap(src, r.mesh, r.mesh.vertices, 48, 48, &tape);
  int exact = 0;
  for (const auto& p : tape.pixels) {
    if (p.cov < 1.0) continue;
    const int x = p.pixel % 48, y = p.pixel / 48;
    const double a = r.image.at(x, y, 3);
    for (int c = 0; c < 3; ++c) ASSERT_EQ(out.frame.px(x, y)[c], 1.0 + a * (r.image.at(x, y, c) - 1.0));
    ++exact;
  }
  EXPECT_GT(exact, 800);
}

TEST(BitmapRender, IntegerTranslationIsExactShift) {
  const auto r = bitmap_rig(48, 12.0);
  const BitmapSource src(r.image);
  auto moved = r.mesh.vertices;
  for (auto& v : moved) v += Vec2{3, -2};
  const auto a = render_bitmap(src, r.mesh, r.mesh.vertices, 48, 48).frame;
  const auto b = render_bitmap(src, r.mesh, moved, 48, 48).frame;
  for (int y = 2; y < 48; ++y)
    for (int x = 0; x < 45; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(b.px(x + 3, y - 2)[c], a.px(x, y)[c]) << x << "," << y;
}

TEST(BitmapRender, RotationMatchesSupersampledReference) {
  // Texture covers the whole image; the mesh is the image rectangle.
  const int n = 64;
  RasterImage img = fixtures::textured_disc(n, n, {32, 32}, 1e9);
  const Polygon rect{{{0, 0}, {64, 0}, {64, 64}, {0, 64}}, {}};
  const auto mesh = triangulate(rect, std::vector<Vec2>{}, 20.0, 30.0);
  const Vec2 c{32, 32};
  const double ang = std::numbers::pi / 6;
  std::vector<Vec2> rot;
  for (Vec2 v : mesh.vertices) rot.push_back(rotate_about(v, c, ang));
  const BitmapSource src(img);
  const auto out = render_bitmap(src, mesh, rot, n, n).frame;
  auto texture = [&](Vec2 p, int ch) {
    const double vals[3] = {0.5 + 0.4 * std::sin(p.x * 0.21) * std::cos(p.y * 0.17),
                            0.5 + 0.4 * std::cos(p.x * 0.13 + p.y * 0.07),
                            0.5 + 0.4 * std::sin(p.y * 0.19 - p.x * 0.05)};
    return vals[ch];
  };
  double err = 0;
  int count = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (std::hypot(x + 0.5 - 32, y + 0.5 - 32) > 24) continue;  // well inside the rotated square
      for (int ch = 0; ch < 3; ++ch) {
        double ref = 0;
        for (int j = 0; j < 8; ++j)
          for (int i = 0; i < 8; ++i) {
            const Vec2 q{x + (i + 0.5) / 8, y + (j + 0.5) / 8};
            ref += texture(rotate_about(q, c, -ang), ch);
          }
        err += std::abs(out.px(x, y)[ch] - ref / 64);
        ++count;
      }
    }
  EXPECT_LT(err / count, 2.0 / 255.0);
}

TEST(BitmapRender, ZeroUpstreamAndConstantTexture) {
  auto r = bitmap_rig(40, 10.0);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) r.image.at(x, y, 0) = r.image.at(x, y, 1) = r.image.at(x, y, 2) = 0.3, r.image.at(x, y, 3) = 1;
  const BitmapSource src(r.image);
  auto moved = r.mesh.vertices;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(0, 0.3);
  for (auto& v : moved) v += Vec2{N(rng), N(rng)};
  BitmapTape tape;
  render_bitmap(src, r.mesh, moved, 40, 40, &tape);
  for (Vec2 g : bitmap_backward(r.mesh, tape, FrameBuffer(40, 40, 0.0))) EXPECT_EQ(g, Vec2{});
  const auto g = bitmap_backward(r.mesh, tape, FrameBuffer(40, 40, 1.0));
  std::vector<char> on_boundary(r.mesh.vertices.size(), 0);
  for (auto [a, b] : r.mesh.boundary_edges()) on_boundary[a] = on_boundary[b] = 1;
  int interior = 0;
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!on_boundary[v]) {
      ++interior;
      EXPECT_EQ(g[v], Vec2{});
    }
  EXPECT_GT(interior, 0);
}

TEST(BitmapRender, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  int checked = 0;
  while (checked < 20) {
    const auto image = fixtures::random_texture(rng, 32, 32);
    const auto mesh = triangulate(fixtures::random_blob(rng, 9, {16, 16}, 12), std::vector<Vec2>{}, 20.0, 10.0);
    const BitmapSource src(image);
    std::normal_distribution<double> N(0, 0.4);
    auto pose = mesh.vertices;
    for (auto& v : pose) v += Vec2{N(rng), N(rng)};
    if (!inverted_triangles(mesh, pose).empty()) continue;  // folded poses are outside the model
    ++checked;
    BitmapTape tape;
    render_bitmap(src, mesh, pose, 32, 32, &tape);
    const auto g = bitmap_backward(mesh, tape, FrameBuffer(32, 32, 1.0));
    const double h = 0.05;
    double num = 0, den = 0;
    for (std::size_t v = 0; v < pose.size(); ++v)
      for (int c = 0; c < 2; ++c) {
        auto p = pose, m = pose;
        (c ? p[v].y : p[v].x) += h;
        (c ? m[v].y : m[v].x) -= h;
        const double fd = (pixel_sum(render_bitmap(src, mesh, p, 32, 32).frame) -
                           pixel_sum(render_bitmap(src, mesh, m, 32, 32).frame)) / (2 * h);
        const double an = c ? g[v].y : g[v].x;
        num += (an - fd) * (an - fd);
        den += fd * fd;
      }
    EXPECT_LT(std::sqrt(num / den), 5e-2) << "instance " << checked;
  }
}

TEST(BitmapRender, CoverageIsBoxFilteredArea) {
  // A single triangle over a white-on-black texture: the rendered darkness
  // sums to the triangle's area.
  RasterImage img(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(x, y, 3) = 1.0;
  TriangleMesh mesh;
  mesh.vertices = {{2.3, 3.1}, {13.7, 4.9}, {6.2, 12.6}};
  mesh.triangles = {{0, 1, 2}};
  const auto f = render_bitmap(BitmapSource(img), mesh, mesh.vertices, 16, 16).frame;
  double dark = 0;
  for (double v : f.pixels) dark += 1.0 - v;
  EXPECT_NEAR(dark / 3, mesh.area(), 1e-9);
}

TEST(BitmapRender, RejectsShapeMismatch) {
  const auto r = bitmap_rig(32, 10.0);
  const BitmapSource src(r.image);
  BitmapTape tape;
  render_bitmap(src, r.mesh, r.mesh.vertices, 32, 32, &tape);
  EXPECT_THROW(bitmap_backward(r.mesh, tape, FrameBuffer(16, 16, 0.0)), Error);
  std::vector<Vec2> short_pose(3);
  EXPECT_THROW(render_bitmap(src, r.mesh, short_pose, 32, 32), Error);
}
