#include <gtest/gtest.h>

#include <atomic>
#include <numbers>
#include <random>
#include <thread>

#include "aniclip/guidance.hpp"
#include "aniclip/remote.hpp"

using namespace aniclip;

namespace {

Skeleton chain_skeleton(int n) {
  Skeleton s;
  for (int i = 0; i < n; ++i) s.keypoints.push_back({10.0 * i, 3.0 * (i % 2)});
  for (int i = 0; i + 1 < n; ++i) s.bones.push_back({i, i + 1});
  s.recompute_rest_lengths();
  return s;
}

std::vector<std::vector<Vec2>> random_frames(const Skeleton& s, int n, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> N(0, sigma);
  std::vector<std::vector<Vec2>> f(n, s.keypoints);
  for (int t = 1; t < n; ++t)
    for (auto& p : f[t]) p += Vec2{N(rng), N(rng)};
  return f;
}

FrameBuffer random_frame(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<double> U(0, 1);
  FrameBuffer f(w, h);
  for (double& v : f.pixels) v = U(rng);
  return f;
}

}  // namespace

TEST(Fidelity, RestPoseIsZero) {
  const auto s = chain_skeleton(5);
  const std::vector<std::vector<Vec2>> frames(6, s.keypoints);
  const auto r = fidelity_loss(frames, s);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& f : r.gradient)
    for (Vec2 g : f) EXPECT_EQ(g, Vec2{});
}

TEST(Fidelity, SingleBoneScaledAboutMidpoint) {
  Skeleton s;
  s.keypoints = {{2, 3}, {9, 7}};
  s.bones = {{0, 1}};
  s.recompute_rest_lengths();
  const double L = distance(s.keypoints[0], s.keypoints[1]);
  for (double k : {0.0, 0.5, 1.0, 1.7, 3.0}) {
    const Vec2 mid = 0.5 * (s.keypoints[0] + s.keypoints[1]);
    std::vector<std::vector<Vec2>> frames{s.keypoints, {mid + k * (s.keypoints[0] - mid), mid + k * (s.keypoints[1] - mid)}};
    EXPECT_NEAR(fidelity_loss(frames, s).loss, L * L * (k - 1) * (k - 1), 1e-9) << k;
  }
}

TEST(Fidelity, NormalizedByFramesAndBones) {
  const auto s = chain_skeleton(4);  // 3 bones
  auto frames = std::vector<std::vector<Vec2>>(5, s.keypoints);
  frames[2][3] += Vec2{0, 0};
  frames[2][3].x += 2.0;  // last bone lengthens by exactly... computed below
  const double before = distance(s.keypoints[2], s.keypoints[3]);
  const double after = distance(frames[2][2], frames[2][3]);
  EXPECT_NEAR(fidelity_loss(frames, s).loss, (after - before) * (after - before) / (4.0 * 3.0), 1e-12);
}

TEST(Fidelity, RigidMotionOfAFrameIsFree) {
  std::mt19937_64 rng(4);
  const auto s = chain_skeleton(6);
  auto frames = random_frames(s, 5, rng, 2.0);
  const double base = fidelity_loss(frames, s).loss;
  EXPECT_GT(base, 0.0);
  for (int t = 1; t < 5; ++t) {
    const double a = 0.3 * t, c = std::cos(a), sn = std::sin(a);
    for (auto& p : frames[t]) p = Vec2{c * p.x - sn * p.y + 7.0 * t, sn * p.x + c * p.y - 3.0};
  }
  EXPECT_NEAR(fidelity_loss(frames, s).loss, base, 1e-10 * base);
}

TEST(Fidelity, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = chain_skeleton(3 + trial % 5);
    auto frames = random_frames(s, 4, rng, 3.0);
    const auto g = fidelity_loss(frames, s).gradient;
    double num = 0, den = 0;
    const double h = 1e-6;
    for (std::size_t t = 1; t < frames.size(); ++t)
      for (std::size_t i = 0; i < frames[t].size(); ++i)
        for (int c = 0; c < 2; ++c) {
          auto p = frames, m = frames;
          (c ? p[t][i].y : p[t][i].x) += h;
          (c ? m[t][i].y : m[t][i].x) -= h;
          const double fd = (fidelity_loss(p, s).loss - fidelity_loss(m, s).loss) / (2 * h);
          const double an = c ? g[t][i].y : g[t][i].x;
          num += (an - fd) * (an - fd);
          den += fd * fd;
        }
    EXPECT_LT(std::sqrt(num / den), 1e-6) << trial;
  }
}

TEST(Fidelity, ZeroLengthBoneHasZeroGradient) {
  Skeleton s;
  s.keypoints = {{0, 0}, {4, 0}};
  s.bones = {{0, 1}};
  s.recompute_rest_lengths();
  std::vector<std::vector<Vec2>> frames{s.keypoints, {{1, 1}, {1, 1}}};
  const auto r = fidelity_loss(frames, s);
  EXPECT_DOUBLE_EQ(r.loss, 16.0);
  EXPECT_EQ(r.gradient[1][0], Vec2{});
  EXPECT_EQ(r.gradient[1][1], Vec2{});
}

TEST(Fidelity, MisalignedKeypointsRejected) {
  const auto s = chain_skeleton(3);
  std::vector<std::vector<Vec2>> frames{s.keypoints, {{0, 0}}};
  EXPECT_THROW(fidelity_loss(frames, s), Error);
}

TEST(MockGuidance, IdenticalFramesGiveZero) {
  std::mt19937_64 rng(1);
  const std::vector<FrameBuffer> f{random_frame(rng, 8, 6), random_frame(rng, 8, 6)};
  const auto r = mock_target_guidance(f, f);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& g : r.gradients)
    for (double v : g.pixels) EXPECT_EQ(v, 0.0);
}

TEST(MockGuidance, ConstantOffsetGradient) {
  std::mt19937_64 rng(2);
  std::vector<FrameBuffer> t{random_frame(rng, 5, 4), random_frame(rng, 5, 4), random_frame(rng, 5, 4)};
  auto f = t;
  for (auto& fr : f)
    for (double& v : fr.pixels) v += 0.1;
  const auto r = mock_target_guidance(f, t);
  const double count = 3 * 5 * 4 * 3;
  for (const auto& g : r.gradients)
    for (double v : g.pixels) EXPECT_NEAR(v, 0.2 / count, 1e-15);
  EXPECT_NEAR(r.loss, 0.01, 1e-15);
}

TEST(MockGuidance, LossMatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::vector<FrameBuffer> a, b;
  for (int t = 0; t < 4; ++t) a.push_back(random_frame(rng, 7, 9)), b.push_back(random_frame(rng, 7, 9));
  double sum = 0, n = 0;
  for (int t = 0; t < 4; ++t)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 7; ++x)
        for (int c = 0; c < 3; ++c) {
          const double d = a[t].px(x, y)[c] - b[t].px(x, y)[c];
          sum += d * d;
          n += 1;
        }
  EXPECT_NEAR(mock_target_guidance(a, b).loss, sum / n, 1e-12);
}

TEST(MockGuidance, ShapeMismatchRejected) {
  const std::vector<FrameBuffer> a{FrameBuffer(4, 4)}, b{FrameBuffer(4, 5)}, c{FrameBuffer(4, 4), FrameBuffer(4, 4)};
  EXPECT_THROW(mock_target_guidance(a, b), Error);
  EXPECT_THROW(mock_target_guidance(a, c), Error);
}

// Wire protocol ----------------------------------------------------------------

TEST(Wire, RequestRoundTripIsFloat32Exact) {
  std::mt19937_64 rng(5);
  GuidanceRequest req;
  for (int t = 0; t < 3; ++t) req.frames.push_back(random_frame(rng, 6, 4));
  req.prompt = "A man is dancing";
  req.seed = 1234567890123ull;
  req.step = 17;
  const auto back = wire::decode_request(wire::encode_request(req));
  EXPECT_EQ(back.prompt, req.prompt);
  EXPECT_EQ(back.seed, req.seed);
  EXPECT_EQ(back.step, req.step);
  ASSERT_EQ(back.frames.size(), 3u);
  for (int t = 0; t < 3; ++t) {
    EXPECT_EQ(back.frames[t].width, 6);
    EXPECT_EQ(back.frames[t].height, 4);
    for (std::size_t i = 0; i < back.frames[t].pixels.size(); ++i)
      EXPECT_EQ(back.frames[t].pixels[i], static_cast<double>(static_cast<float>(req.frames[t].pixels[i])));
  }
}

TEST(Wire, TensorLayoutIsNHWC) {
  FrameBuffer f(2, 1, 0.0);
  f.px(1, 0)[2] = 1.0;
  const auto t = wire::encode_frames(std::vector<FrameBuffer>{f});
  EXPECT_EQ(t["shape"], nlohmann::json({1, 1, 2, 3}));
  const auto& bytes = t["data"].get_binary();
  ASSERT_EQ(bytes.size(), 24u);
  // Element 5 (x=1, c=2) holds 1.0f = 0x3f800000 little-endian.
  EXPECT_EQ(bytes[20], 0x00);
  EXPECT_EQ(bytes[22], 0x80);
  EXPECT_EQ(bytes[23], 0x3f);
}

TEST(Wire, MalformedBodiesRejected) {
  EXPECT_THROW(wire::decode_response(std::vector<std::uint8_t>{0xc1}), Error);
  nlohmann::json bad{{"grad", {{"shape", {1, 2, 2, 3}}, {"dtype", "float32"}, {"data", nlohmann::json::binary({1, 2, 3})}}},
                     {"loss", 0.0}};
  const auto b = nlohmann::json::to_msgpack(bad);
  EXPECT_THROW(wire::decode_response(b), Error);
}

namespace {

/// In-process stand-in for the guidance service.
class StubServer {
 public:
  std::atomic<int> gradient_calls{0};
  int fail_first = 0;          // answer 503 to this many gradient calls
  bool emit_nan = false;
  bool wrong_shape = false;
  int reject_status = 0;       // answer this status on every gradient call
  double offset = 0.0;         // residual added to every gradient element

  StubServer() {
    srv_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"stub": true, "resolution": [32, 24], "guidance_scale": 50})", "application/json");
    });
    srv_.Post("/gradient", [this](const httplib::Request& req, httplib::Response& res) {
      const int call = ++gradient_calls;
      if (reject_status) {
        res.status = reject_status;
        res.set_content("rejected", "text/plain");
        return;
      }
      if (call <= fail_first) {
        res.status = 503;
        return;
      }
      const std::vector<std::uint8_t> body(req.body.begin(), req.body.end());
      const auto r = wire::decode_request(body);
      GuidanceResult out;
      for (const auto& f : r.frames) out.gradients.emplace_back(wrong_shape ? f.width + 1 : f.width, f.height, offset);
      if (emit_nan) out.gradients[0].pixels[0] = std::nan("");
      out.loss = 0.0;
      out.meta = {{"t", 500}, {"prompt", r.prompt}};
      const auto bytes = wire::encode_response(out);
      res.set_content(std::string(bytes.begin(), bytes.end()), "application/msgpack");
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~StubServer() {
    srv_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
};

RemoteOptions fast(const std::string& endpoint) {
  RemoteOptions o;
  o.endpoint = endpoint;
  o.timeout = 5;
  o.backoff = 0.001;
  return o;
}

GuidanceRequest request(int n, int w, int h) {
  GuidanceRequest r;
  for (int t = 0; t < n; ++t) r.frames.emplace_back(w, h, 0.5);
  r.prompt = "A man is dancing";
  return r;
}

}  // namespace

TEST(Remote, HealthDeclaresResolution) {
  StubServer s;
  RemoteGuidance g(fast(s.endpoint()));
  EXPECT_EQ(g.resolution(), std::make_pair(32, 24));
  EXPECT_EQ(g.health()["guidance_scale"], 50);
  EXPECT_EQ(g.describe()["health"]["stub"], true);
}

TEST(Remote, StubModeGivesZeroSameShapeGradient) {
  StubServer s;
  RemoteGuidance g(fast(s.endpoint()));
  const auto req = request(24, 32, 24);
  const auto r = g.evaluate(req);
  ASSERT_EQ(r.gradients.size(), 24u);
  for (const auto& f : r.gradients) {
    EXPECT_EQ(f.width, 32);
    EXPECT_EQ(f.height, 24);
    for (double v : f.pixels) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(r.meta["prompt"], "A man is dancing");
}

TEST(Remote, FullSizeRoundTrip) {
  StubServer s;
  s.offset = 0.25;
  RemoteGuidance g(fast(s.endpoint()));
  const auto r = g.evaluate(request(24, 256, 256));
  ASSERT_EQ(r.gradients.size(), 24u);
  EXPECT_EQ(r.gradients[23].pixels.size(), 256u * 256u * 3u);
  EXPECT_EQ(r.gradients[23].pixels.back(), 0.25);
}

TEST(Remote, RetriesTransientFailuresWithBackoff) {
  StubServer s;
  s.fail_first = 2;
  RemoteGuidance g(fast(s.endpoint()));
  std::vector<double> waits;
  g.sleep = [&](double w) { waits.push_back(w); };
  EXPECT_NO_THROW(g.evaluate(request(2, 32, 24)));
  EXPECT_EQ(s.gradient_calls.load(), 3);
  ASSERT_EQ(waits.size(), 2u);
  EXPECT_DOUBLE_EQ(waits[1], 2 * waits[0]);
}

TEST(Remote, GivesUpAfterThreeAttempts) {
  StubServer s;
  s.fail_first = 3;
  RemoteGuidance g(fast(s.endpoint()));
  g.sleep = [](double) {};
  try {
    g.evaluate(request(1, 32, 24));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Provider);
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
  }
  EXPECT_EQ(s.gradient_calls.load(), 3);
}

TEST(Remote, ClientErrorsAreNotRetried) {
  StubServer s;
  s.reject_status = 400;
  RemoteGuidance g(fast(s.endpoint()));
  EXPECT_THROW(g.evaluate(request(1, 32, 24)), Error);
  EXPECT_EQ(s.gradient_calls.load(), 1);
}

TEST(Remote, NonFiniteOrMisshapenResponsesRejected) {
  StubServer s;
  RemoteGuidance g(fast(s.endpoint()));
  s.emit_nan = true;
  EXPECT_THROW(g.evaluate(request(2, 32, 24)), Error);
  s.emit_nan = false;
  s.wrong_shape = true;
  EXPECT_THROW(g.evaluate(request(2, 32, 24)), Error);
}

TEST(Remote, UnreachableEndpointIsProviderError) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto o = fast("http://127.0.0.1:" + std::to_string(port));
  o.timeout = 0.5;
  try {
    RemoteGuidance g(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Provider);
  }
}
