#include <gtest/gtest.h>

#include <random>

#include "clipcurate/classifier_client.hpp"
#include "clipcurate/service.hpp"
#include "clipcurate/synth.hpp"
#include "mock_server.hpp"

using namespace clipcurate;
using testsupport::MockServer;
using testsupport::RecordingSleeper;
using testsupport::reply_json;

namespace {

ServiceConfig config_for(const MockServer& server, int attempts = 1) {
  ServiceConfig cfg;
  cfg.url = server.url();
  cfg.attempts = attempts;
  cfg.timeout_s = 2.0;
  return cfg;
}

std::vector<FrameBuffer> some_frames(int n) {
  synth::Scene s;
  s.width = 64;
  s.height = 48;
  synth::Renderer r(s);
  std::vector<FrameBuffer> out;
  for (int i = 0; i < n; ++i) out.push_back(r.luma_frame(i));
  return out;
}

}  // namespace

TEST(Endpoint, Parses) {
  auto e = Endpoint::parse("http://localhost:8080/classify");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 8080);
  EXPECT_EQ(e.path, "/classify");
  auto d = Endpoint::parse("http://example.org");
  EXPECT_EQ(d.port, 80);
  EXPECT_EQ(d.path, "/");
  EXPECT_THROW(Endpoint::parse("ftp://x/y"), Error);
  EXPECT_THROW(Endpoint::parse("http://host:99999/"), Error);
  EXPECT_THROW(Endpoint::parse("http://host:8x/"), Error);
  EXPECT_THROW(Endpoint::parse("http:///path"), Error);
}

TEST(Base64, KnownVectors) {
  auto enc = [](std::string s) {
    return base64_encode(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  EXPECT_EQ(enc(""), "");
  EXPECT_EQ(enc("f"), "Zg==");
  EXPECT_EQ(enc("fo"), "Zm8=");
  EXPECT_EQ(enc("foo"), "Zm9v");
  EXPECT_EQ(enc("foob"), "Zm9vYg==");
  EXPECT_EQ(enc("fooba"), "Zm9vYmE=");
  EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
}

TEST(Base64, RoundTrip) {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 200; ++n) {
    std::vector<std::uint8_t> data(static_cast<std::size_t>(n));
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(base64_decode(base64_encode(data)), data);
  }
}

TEST(JsonClient, Success) {
  MockServer server([](const auto&, auto& res) { reply_json(res, R"({"ok": true})"); });
  JsonClient client(config_for(server));
  auto r = client.post(json{{"x", 1}});
  EXPECT_EQ(r.attempts, 1);
  EXPECT_TRUE(r.body.at("ok").get<bool>());
  EXPECT_EQ(json::parse(server.last_body()).at("x"), 1);
}

TEST(JsonClient, RetriesServerErrorThenSucceeds) {
  std::atomic<int> calls{0};
  MockServer server([&](const auto&, auto& res) {
    if (calls++ == 0) reply_json(res, "{}", 500);
    else reply_json(res, R"({"ok": 1})");
  });
  RecordingSleeper sleeper;
  JsonClient client(config_for(server, 3), sleeper);
  auto r = client.post(json::object());
  EXPECT_EQ(r.attempts, 2);
  EXPECT_EQ(*sleeper.waits, (std::vector<double>{1.0}));
}

TEST(JsonClient, GivesUpAfterConfiguredAttempts) {
  MockServer server([](const auto&, auto& res) { reply_json(res, "{}", 503); });
  RecordingSleeper sleeper;
  JsonClient client(config_for(server, 3), sleeper);
  try {
    client.post(json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ServiceUnavailable);
  }
  EXPECT_EQ(server.requests(), 3);
  EXPECT_EQ(*sleeper.waits, (std::vector<double>{1.0, 4.0}));
}

TEST(JsonClient, NonJsonIsMalformedWithoutRetry) {
  MockServer server([](const auto&, auto& res) { res.set_content("<html>", "text/html"); });
  JsonClient client(config_for(server, 3), RecordingSleeper{});
  try {
    client.post(json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedResponse);
  }
  EXPECT_EQ(server.requests(), 1);
}

TEST(JsonClient, ConnectionRefusedIsUnavailable) {
  std::string url;
  {
    MockServer server([](const auto&, auto& res) { reply_json(res, "{}"); });
    url = server.url();
  }
  ServiceConfig cfg;
  cfg.url = url;
  cfg.timeout_s = 1.0;
  JsonClient client(cfg);
  try {
    client.post(json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ServiceUnavailable);
  }
}

TEST(JsonClient, ReadTimeoutIsUnavailable) {
  MockServer server([](const auto&, auto& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(800));
    reply_json(res, "{}");
  });
  ServiceConfig cfg = config_for(server);
  cfg.timeout_s = 0.2;
  JsonClient client(cfg);
  try {
    client.post(json::object());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ServiceUnavailable);
  }
}

TEST(RateLimiter, SpacesRequestsAcrossThreads) {
  RateLimiter limiter(40.0);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 3; ++i) limiter.acquire();
    });
  for (auto& t : threads) t.join();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_GE(elapsed, 11 / 40.0 - 1e-3);  // 12 slots, first one immediate
}

TEST(RateLimiter, UnlimitedDoesNotWait) {
  RateLimiter limiter(0.0);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) limiter.acquire();
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 0.1);
}

TEST(ClassifyRemote, EchoesServiceLabel) {
  MockServer server([](const auto&, auto& res) { reply_json(res, R"({"label":"C3","confidence":0.9})"); });
  ClassifierClient client(config_for(server));
  const auto frames = some_frames(4);
  auto label = classify_remote(frames, client);
  EXPECT_EQ(label.label, MotionClass::C3);
  EXPECT_DOUBLE_EQ(label.confidence, 0.9);
  EXPECT_EQ(label.provenance, "remote");
  const auto sent = json::parse(server.last_body());
  EXPECT_EQ(sent.at("count"), 4);
  EXPECT_EQ(sent.at("width"), 64);
  EXPECT_EQ(sent.at("format"), "gray8");
  EXPECT_EQ(base64_decode(sent.at("frames")[2].get<std::string>()), frames[2].luma);
}

TEST(ClassifyRemote, FallsBackOnUnavailableService) {
  MockServer server([](const auto&, auto& res) { reply_json(res, "{}", 503); });
  ClassifierClient client(config_for(server));
  auto heuristic = [] {
    std::vector<GlobalMotion> m(10);
    for (auto& g : m) g.tx = 3.0;
    return classify_clip(m);
  };
  auto label = classify_remote(some_frames(4), client, heuristic);
  EXPECT_EQ(label.label, MotionClass::C4);
  EXPECT_EQ(label.provenance, "fallback");
  EXPECT_EQ(label.rule, "linear");

  ServiceConfig strict = config_for(server);
  strict.fallback = false;
  ClassifierClient no_fallback(strict);
  EXPECT_THROW(classify_remote(some_frames(4), no_fallback, heuristic), Error);
}

TEST(ClassifyRemote, MalformedBodyIsReported) {
  for (const char* body : {R"({"confidence":0.9})", R"({"label":"C9","confidence":0.9})",
                           R"({"label":"C2","confidence":1.5})", R"({"label":2,"confidence":0.5})", "[]"}) {
    MockServer server([&](const auto&, auto& res) { reply_json(res, body); });
    ClassifierClient client(config_for(server));
    try {
      classify_remote(some_frames(4), client, [] { return MotionLabel{}; });
      FAIL() << body;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedResponse) << body;
    }
  }
}
