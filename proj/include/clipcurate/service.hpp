#pragma once

// JSON-over-HTTP plumbing shared by the classifier, scorer and caption
// clients: endpoint parsing, timeouts, retry with backoff, rate limiting and
// frame payload encoding.

#include <httplib.h>

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>

#include "clipcurate/error.hpp"
#include "clipcurate/media.hpp"

namespace clipcurate {

using json = nlohmann::json;

struct Endpoint {
  std::string host;
  int port = 80;
  std::string path = "/";

  static Endpoint parse(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0)
      throw Error(ErrorCode::InvalidConfig, "service url must start with http:// : '" + url + "'");
    Endpoint e;
    const std::string rest = url.substr(scheme.size());
    const auto slash = rest.find('/');
    const std::string authority = rest.substr(0, slash);
    if (slash != std::string::npos) e.path = rest.substr(slash);
    const auto colon = authority.rfind(':');
    if (colon != std::string::npos) {
      e.host = authority.substr(0, colon);
      try {
        std::size_t used = 0;
        e.port = std::stoi(authority.substr(colon + 1), &used);
        if (used != authority.size() - colon - 1) throw std::invalid_argument("port");
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidConfig, "bad port in service url '" + url + "'");
      }
    } else {
      e.host = authority;
    }
    if (e.host.empty()) throw Error(ErrorCode::InvalidConfig, "missing host in service url '" + url + "'");
    if (e.port <= 0 || e.port > 65535) throw Error(ErrorCode::InvalidConfig, "port out of range in '" + url + "'");
    return e;
  }
};

struct ServiceConfig {
  std::string url;
  double timeout_s = 10.0;
  int attempts = 1;             // total tries per request
  double backoff_s = 1.0;       // wait before the second try
  double backoff_factor = 4.0;  // each further wait is this many times longer
  double rps_limit = 0.0;       // requests per second across all workers, 0 = unlimited
  bool fallback = true;         // use the builtin implementation when the service is down

  bool enabled() const { return !url.empty(); }

  void validate(const std::string& section) const {
    if (!enabled()) return;
    Endpoint::parse(url);
    if (!(timeout_s > 0.0)) throw Error(ErrorCode::InvalidConfig, section + ".timeout_s must be > 0");
    if (attempts < 1) throw Error(ErrorCode::InvalidConfig, section + ".attempts must be >= 1");
    if (backoff_s < 0.0 || backoff_factor < 1.0)
      throw Error(ErrorCode::InvalidConfig, section + ": backoff_s >= 0 and backoff_factor >= 1 required");
    if (rps_limit < 0.0) throw Error(ErrorCode::InvalidConfig, section + ".rps_limit must be >= 0");
  }
};

using Sleeper = std::function<void(double seconds)>;

inline void real_sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

/// Spaces requests at least 1/rps apart; safe to share between threads.
class RateLimiter {
 public:
  explicit RateLimiter(double rps = 0.0) : interval_(rps > 0 ? 1.0 / rps : 0.0) {}

  void acquire() {
    if (interval_ <= 0) return;
    std::chrono::steady_clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      const auto now = std::chrono::steady_clock::now();
      slot = std::max(now, next_);
      next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                         std::chrono::duration<double>(interval_));
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double interval_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct PostResult {
  json body;
  int attempts = 0;
};

/// Stateless JSON POST client. Each request opens its own connection, so one
/// instance can be used from many workers at once.
class JsonClient {
 public:
  explicit JsonClient(ServiceConfig cfg, Sleeper sleeper = real_sleep)
      : cfg_(std::move(cfg)), endpoint_(Endpoint::parse(cfg_.url)), sleeper_(std::move(sleeper)),
        limiter_(std::make_shared<RateLimiter>(cfg_.rps_limit)) {
    cfg_.validate("service");
  }

  const ServiceConfig& config() const { return cfg_; }

  /// Retries only ServiceUnavailable; a reply that is not JSON is
  /// MalformedResponse immediately.
  PostResult post(const json& body) const {
    const std::string payload = body.dump();
    double wait = cfg_.backoff_s;
    for (int attempt = 1;; ++attempt) {
      try {
        return {post_once(payload), attempt};
      } catch (const Error& e) {
        if (e.code() != ErrorCode::ServiceUnavailable || attempt >= cfg_.attempts) throw;
      }
      sleeper_(wait);
      wait *= cfg_.backoff_factor;
    }
  }

 private:
  json post_once(const std::string& payload) const {
    limiter_->acquire();
    httplib::Client cli(endpoint_.host, endpoint_.port);
    const auto sec = static_cast<time_t>(cfg_.timeout_s);
    const auto usec = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(sec)) * 1e6);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
    auto res = cli.Post(endpoint_.path, payload, "application/json");
    if (!res)
      throw Error(ErrorCode::ServiceUnavailable, cfg_.url + ": " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
      throw Error(ErrorCode::ServiceUnavailable, cfg_.url + ": HTTP " + std::to_string(res->status));
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedResponse, cfg_.url + ": body is not JSON (" + e.what() + ")");
    }
  }

  ServiceConfig cfg_;
  Endpoint endpoint_;
  Sleeper sleeper_;
  std::shared_ptr<RateLimiter> limiter_;
};

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  static constexpr char tbl[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out += tbl[v >> 18];
    out += tbl[(v >> 12) & 63];
    out += tbl[(v >> 6) & 63];
    out += tbl[v & 63];
  }
  if (i < data.size()) {
    std::uint32_t v = data[i] << 16;
    if (i + 1 < data.size()) v |= data[i + 1] << 8;
    out += tbl[v >> 18];
    out += tbl[(v >> 12) & 63];
    out += i + 1 < data.size() ? tbl[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : s) {
    if (c == '=') break;
    const int v = val(c);
    if (v < 0) throw Error(ErrorCode::MalformedResponse, "invalid base64 character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

/// {count, width, height, format: "gray8", frames: [base64 planes]}
inline json gray_payload(std::span<const FrameBuffer> frames) {
  json j;
  j["count"] = frames.size();
  j["width"] = frames.empty() ? 0 : frames[0].width;
  j["height"] = frames.empty() ? 0 : frames[0].height;
  j["format"] = "gray8";
  j["frames"] = json::array();
  for (const auto& f : frames) j["frames"].push_back(base64_encode(f.luma));
  return j;
}

/// {count, width, height, format: "rgb24", frames: [base64 interleaved RGB]}
inline json rgb_payload(std::span<const ColorFrame> frames) {
  json j;
  j["count"] = frames.size();
  j["width"] = frames.empty() ? 0 : frames[0].width;
  j["height"] = frames.empty() ? 0 : frames[0].height;
  j["format"] = "rgb24";
  j["frames"] = json::array();
  for (const auto& f : frames) j["frames"].push_back(base64_encode(f.rgb));
  return j;
}

namespace detail {

inline const json& require_field(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key))
    throw Error(ErrorCode::MalformedResponse, std::string("response lacks field '") + key + "'");
  return body.at(key);
}

inline double require_number(const json& body, const char* key, double lo, double hi) {
  const json& v = require_field(body, key);
  if (!v.is_number()) throw Error(ErrorCode::MalformedResponse, std::string("'") + key + "' is not a number");
  const double d = v.get<double>();
  if (!(d >= lo && d <= hi))
    throw Error(ErrorCode::MalformedResponse, std::string("'") + key + "' out of range: " + std::to_string(d));
  return d;
}

inline std::string require_string(const json& body, const char* key) {
  const json& v = require_field(body, key);
  if (!v.is_string()) throw Error(ErrorCode::MalformedResponse, std::string("'") + key + "' is not a string");
  return v.get<std::string>();
}

}  // namespace detail

}  // namespace clipcurate
