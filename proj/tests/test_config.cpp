#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "aniclip/config.hpp"

using namespace aniclip;

namespace {

ErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

std::string error_text(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Toml, ScalarsTablesAndArrays) {
  const auto j = parse_toml(R"(
# comment
title = "clip \"one\"\n"
[optimize]
steps = 300   # trailing comment
learning_rate = 0.25
lambda = 1e2
looping = true
seed = -7
[render.export]
size = [ [1, 2],
         [3, 4], ]
a.b = 'literal\n'
)");
  EXPECT_EQ(j["title"], "clip \"one\"\n");
  EXPECT_EQ(j["optimize"]["steps"], 300);
  EXPECT_TRUE(j["optimize"]["steps"].is_number_integer());
  EXPECT_EQ(j["optimize"]["learning_rate"], 0.25);
  EXPECT_EQ(j["optimize"]["lambda"], 100.0);
  EXPECT_EQ(j["optimize"]["looping"], true);
  EXPECT_EQ(j["optimize"]["seed"], -7);
  EXPECT_EQ(j["render"]["export"]["size"], nlohmann::json::parse("[[1,2],[3,4]]"));
  EXPECT_EQ(j["render"]["export"]["a"]["b"], "literal\\n");
}

TEST(Toml, SyntaxErrorsNameTheLine) {
  EXPECT_EQ(error_kind([] { parse_toml("a = 1\nb = \n"); }), ErrorKind::Config);
  EXPECT_NE(error_text([] { parse_toml("a = 1\nb = \n"); }).find(":2"), std::string::npos);
  EXPECT_EQ(error_kind([] { parse_toml("a = \"open\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([] { parse_toml("[t]\n[t]\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([] { parse_toml("a = 1\na = 2\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([] { parse_toml("a = [1, 2\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([] { parse_toml("a = 1 b = 2\n"); }), ErrorKind::Config);
}

TEST(AppConfig, DefaultsSnapshot) {
  const AppConfig c;
  const auto j = to_json(c);
  EXPECT_EQ(j["rig"]["rho"], 0.7);
  EXPECT_EQ(j["optimize"]["lambda"], 25.0);
  EXPECT_EQ(j["optimize"]["frames"], 24);
  EXPECT_EQ(j["optimize"]["steps"], 500);
  EXPECT_EQ(j["optimize"]["learning_rate"], 0.5);
  EXPECT_EQ(j["optimize"]["order"], 3);
  EXPECT_EQ(j["optimize"]["looping"], false);
  EXPECT_EQ(j["provider"]["guidance_scale"], 50.0);
  EXPECT_EQ(j["provider"]["kind"], "mock");
  EXPECT_EQ(j["render"]["width"], 256);
  EXPECT_EQ(j["render"]["height"], 256);
  EXPECT_NEAR(j["render"]["frame_delay"].get<double>(), 1.0 / 12, 1e-15);
  const auto svc = service_config(c);
  EXPECT_EQ(svc["guidance_scale"], 50.0);
  EXPECT_EQ(svc["resolution"], nlohmann::json::parse("[256, 256]"));
}

TEST(AppConfig, OverlayAppliesKnownKeys) {
  const auto c = apply_config(AppConfig{}, parse_toml(R"(
[rig]
rho = 0.9
quality = 25
[optimize]
steps = 120
frames = 12
looping = true
deformer = "lbs"
seed = 9
[provider]
kind = "remote"
endpoint = "http://example.test:9000/sds"
guidance_scale = 30
[render]
width = 128
height = 96
[layers]
groups = [["body"], ["arm", "hand"]]
)"));
  EXPECT_EQ(c.rig.rho, 0.9);
  EXPECT_EQ(c.rig.min_angle, 25.0);
  EXPECT_EQ(c.optimize.steps, 120);
  EXPECT_EQ(c.optimize.frames, 12);
  EXPECT_TRUE(c.optimize.looping);
  EXPECT_EQ(c.optimize.deformer, DeformerKind::LinearBlend);
  EXPECT_EQ(c.optimize.seed, 9u);
  EXPECT_EQ(c.optimize.lambda, 25.0);  // untouched
  EXPECT_EQ(c.provider.kind, "remote");
  EXPECT_EQ(c.provider.remote.endpoint, "http://example.test:9000/sds");
  EXPECT_EQ(c.provider.guidance_scale, 30.0);
  EXPECT_EQ(c.render.width, 128);
  EXPECT_EQ(c.render.height, 96);
  ASSERT_EQ(c.layers.size(), 2u);
  EXPECT_EQ(c.layers[1], (std::vector<std::string>{"arm", "hand"}));
}

TEST(AppConfig, RejectsUnknownAndMistyped) {
  auto apply = [](const char* text) { apply_config(AppConfig{}, parse_toml(text)); };
  EXPECT_EQ(error_kind([&] { apply("[optimize]\nstep = 3\n"); }), ErrorKind::Config);
  EXPECT_NE(error_text([&] { apply("[optimize]\nstep = 3\n"); }).find("step"), std::string::npos);
  EXPECT_EQ(error_kind([&] { apply("[colors]\na = 1\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[optimize]\nsteps = \"many\"\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[optimize]\nsteps = 2.5\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[optimize]\nseed = -1\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[optimize]\ndeformer = \"mls\"\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[optimize]\nframes = 7\nlooping = true\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[provider]\nkind = \"magic\"\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[render]\nwidth = 0\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[layers]\ngroups = [\"body\"]\n"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { apply("[rig]\nrho = -1\n"); }), ErrorKind::Config);
}

TEST(AppConfig, IntegersAcceptedForFloats) {
  const auto c = apply_config(AppConfig{}, parse_toml("[optimize]\nlambda = 10\nlearning_rate = 1\n"));
  EXPECT_EQ(c.optimize.lambda, 10.0);
  EXPECT_EQ(c.optimize.learning_rate, 1.0);
}

TEST(AppConfig, ReadsFilesAndLayerGroups) {
  const auto dir = std::filesystem::temp_directory_path() / "aniclip_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "layers.toml") << "groups = [[\"a\", \"b\"], [\"c\"]]\n";
    std::ofstream(dir / "bad.toml") << "other = 1\n";
  }
  const auto g = read_layer_groups(dir / "layers.toml");
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0], (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(error_kind([&] { read_layer_groups(dir / "bad.toml"); }), ErrorKind::Config);
  EXPECT_EQ(error_kind([&] { read_toml(dir / "missing.toml"); }), ErrorKind::Config);
  std::filesystem::remove_all(dir);
}
