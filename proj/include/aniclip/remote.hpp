#pragma once

#include "httplib.h"
#include "json.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "aniclip/error.hpp"
#include "aniclip/guidance.hpp"

namespace aniclip {

// Wire format ------------------------------------------------------------------
//
// A tensor is a map {shape: [N, H, W, 3], dtype: "float32", data: bin} with
// little-endian row-major bytes. Request: {frames, prompt, seed, step};
// response: {grad, loss, meta}. Bodies are MessagePack.

namespace wire {

inline nlohmann::json encode_frames(std::span<const FrameBuffer> frames) {
  const int n = static_cast<int>(frames.size());
  const int h = n ? frames[0].height : 0, w = n ? frames[0].width : 0;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(n) * w * h * 3 * 4);
  for (const auto& f : frames)
    for (double v : f.pixels) {
      const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
    }
  return {{"shape", {n, h, w, 3}}, {"dtype", "float32"}, {"data", nlohmann::json::binary(std::move(bytes))}};
}

inline std::vector<FrameBuffer> decode_frames(const nlohmann::json& t) {
  try {
    if (t.at("dtype").get<std::string>() != "float32") fail(ErrorKind::Provider, "tensor dtype must be float32");
    const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
    if (shape.size() != 4 || shape[3] != 3 || shape[0] < 0 || shape[1] < 0 || shape[2] < 0)
      fail(ErrorKind::Provider, "tensor shape must be N x H x W x 3");
    const auto& data = t.at("data").get_binary();
    const std::size_t count = static_cast<std::size_t>(shape[0] * shape[1] * shape[2] * 3);
    if (data.size() != 4 * count)
      fail(ErrorKind::Provider, "tensor has " + std::to_string(data.size()) + " bytes, shape needs " + std::to_string(4 * count));
    std::vector<FrameBuffer> frames;
    std::size_t p = 0;
    for (std::int64_t i = 0; i < shape[0]; ++i) {
      FrameBuffer f(static_cast<int>(shape[2]), static_cast<int>(shape[1]), 0.0);
      for (double& v : f.pixels) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(data[p++]) << (8 * k);
        v = std::bit_cast<float>(u);
      }
      frames.push_back(std::move(f));
    }
    return frames;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Provider, std::string("malformed tensor: ") + e.what());
  }
}

inline std::vector<std::uint8_t> encode_request(const GuidanceRequest& req) {
  const nlohmann::json j{{"frames", encode_frames(req.frames)},
                         {"prompt", req.prompt},
                         {"seed", req.seed},
                         {"step", req.step}};
  return nlohmann::json::to_msgpack(j);
}

inline GuidanceRequest decode_request(std::span<const std::uint8_t> body) {
  try {
    const auto j = nlohmann::json::from_msgpack(body.begin(), body.end());
    GuidanceRequest r;
    r.frames = decode_frames(j.at("frames"));
    r.prompt = j.at("prompt").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.step = j.at("step").get<std::int64_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Provider, std::string("malformed guidance request: ") + e.what());
  }
}

inline std::vector<std::uint8_t> encode_response(const GuidanceResult& res) {
  const nlohmann::json j{{"grad", encode_frames(res.gradients)}, {"loss", res.loss}, {"meta", res.meta}};
  return nlohmann::json::to_msgpack(j);
}

inline GuidanceResult decode_response(std::span<const std::uint8_t> body) {
  try {
    const auto j = nlohmann::json::from_msgpack(body.begin(), body.end());
    GuidanceResult r;
    r.gradients = decode_frames(j.at("grad"));
    r.loss = j.at("loss").get<double>();
    if (j.contains("meta")) r.meta = j.at("meta");
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Provider, std::string("malformed guidance response: ") + e.what());
  }
}

}  // namespace wire

// Client -----------------------------------------------------------------------

struct RemoteOptions {
  std::string endpoint = "http://127.0.0.1:8765";  // scheme://host:port[/prefix]
  double timeout = 120.0;                          // seconds per request
  int attempts = 3;
  double backoff = 0.5;  // seconds before the second attempt; doubles after
};

/// Guidance from an HTTP service: GET {prefix}/health, POST {prefix}/gradient.
class RemoteGuidance final : public GuidanceProvider {
 public:
  explicit RemoteGuidance(RemoteOptions opt) : opt_(std::move(opt)) {
    if (opt_.attempts < 1) fail(ErrorKind::Config, "provider attempts must be at least 1");
    if (!(opt_.timeout > 0)) fail(ErrorKind::Config, "provider timeout must be positive");
    const auto scheme_end = opt_.endpoint.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto slash = opt_.endpoint.find('/', host_start);
    base_ = opt_.endpoint.substr(0, slash);
    prefix_ = slash == std::string::npos ? "" : opt_.endpoint.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (base_.size() <= host_start) fail(ErrorKind::Config, "provider endpoint has no host: " + opt_.endpoint);
    health_ = fetch_health();
    try {
      const auto res = health_.at("resolution");
      width_ = res.at(0).get<int>();
      height_ = res.at(1).get<int>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Provider, "provider /health does not declare a resolution [width, height]");
    }
    if (width_ <= 0 || height_ <= 0) fail(ErrorKind::Provider, "provider declared a non-positive resolution");
  }

  const nlohmann::json& health() const { return health_; }
  std::pair<int, int> resolution() const override { return {width_, height_}; }
  nlohmann::json describe() const override { return {{"provider", "remote"}, {"endpoint", opt_.endpoint}, {"health", health_}}; }

  GuidanceResult evaluate(const GuidanceRequest& req) override {
    req.validate();
    const auto body = wire::encode_request(req);
    const std::string payload(body.begin(), body.end());
    const auto resp = with_retries("POST " + prefix_ + "/gradient", [&](httplib::Client& cli) {
      return cli.Post(prefix_ + "/gradient", payload, "application/msgpack");
    });
    const std::vector<std::uint8_t> bytes(resp.begin(), resp.end());
    auto result = wire::decode_response(bytes);
    result.validate_against(req);
    return result;
  }

  /// Sleep between attempts; replaceable so tests need not wait.
  std::function<void(double)> sleep = [](double s) {
    std::this_thread::sleep_for(std::chrono::duration<double>(s));
  };

 private:
  template <class Call>
  std::string with_retries(const std::string& what, Call&& call) {
    std::string last;
    double wait = opt_.backoff;
    for (int attempt = 1; attempt <= opt_.attempts; ++attempt) {
      httplib::Client cli(base_);
      const auto secs = static_cast<time_t>(opt_.timeout);
      const auto usecs = static_cast<time_t>((opt_.timeout - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);
      auto res = call(cli);
      bool transient = true;
      if (!res) {
        last = httplib::to_string(res.error());
      } else if (res->status == 200) {
        return res->body;
      } else {
        last = "HTTP " + std::to_string(res->status) + (res->body.empty() ? "" : ": " + res->body.substr(0, 200));
        transient = res->status >= 500 || res->status == 429 || res->status == 408;
      }
      if (!transient) break;
      if (attempt < opt_.attempts) {
        sleep(wait);
        wait *= 2;
      }
    }
    fail(ErrorKind::Provider, what + " at " + base_ + " failed: " + last);
  }

  nlohmann::json fetch_health() {
    const auto body = with_retries("GET " + prefix_ + "/health", [&](httplib::Client& cli) { return cli.Get(prefix_ + "/health"); });
    try {
      if (!body.empty() && (body.front() == '{' || body.front() == ' ')) return nlohmann::json::parse(body);
      return nlohmann::json::from_msgpack(body);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Provider, std::string("malformed /health response: ") + e.what());
    }
  }

  RemoteOptions opt_;
  std::string base_, prefix_;
  nlohmann::json health_;
  int width_ = 0, height_ = 0;
};

}  // namespace aniclip
