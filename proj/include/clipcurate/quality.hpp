#pragma once

// Aesthetic and technical-quality scores per clip, and the retention rules
// applied on top of them and the motion label.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/error.hpp"
#include "clipcurate/hashing.hpp"
#include "clipcurate/media.hpp"
#include "clipcurate/service.hpp"

namespace clipcurate {

enum class ScorerProvenance { BuiltinProxy, External };

inline const char* to_string(ScorerProvenance p) {
  return p == ScorerProvenance::BuiltinProxy ? "builtin_proxy" : "external";
}

inline ScorerProvenance scorer_provenance_from_string(const std::string& s) {
  if (s == "builtin_proxy") return ScorerProvenance::BuiltinProxy;
  if (s == "external") return ScorerProvenance::External;
  throw Error(ErrorCode::InvalidArgument, "unknown scorer provenance '" + s + "'");
}

struct ScoreRecord {
  std::string clip_id;
  double aesthetic = 0.0;  // [0, 10]
  double quality = 0.0;    // [0, 10]
  ScorerProvenance provenance = ScorerProvenance::BuiltinProxy;

  bool operator==(const ScoreRecord&) const = default;
};

/// Raw per-frame measurements behind the builtin scores.
struct ImageMetrics {
  double colorfulness = 0.0;  // Hasler-Suesstrunk M
  double contrast = 0.0;      // std-dev of luma
  double sharpness = 0.0;     // variance of the 4-neighbour Laplacian of luma
  double blockiness = 1.0;    // mean |step| across 8-px block edges / mean |step| elsewhere
};

/// Piecewise-linear map, clamped at both ends.
struct CalibrationTable {
  std::span<const std::array<double, 2>> knots;

  double operator()(double x) const {
    if (x <= knots.front()[0]) return knots.front()[1];
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (x <= knots[i][0]) {
        const auto& [x0, y0] = knots[i - 1];
        const auto& [x1, y1] = knots[i];
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
      }
    return knots.back()[1];
  }
};

namespace calibration {
// Colorfulness anchors follow the perceptual scale attached to the metric
// (15 slightly, 33 moderately, 45 averagely, 59 quite, 82 highly, 109 extremely).
inline constexpr std::array<std::array<double, 2>, 7> colorfulness{
    {{0, 0}, {15, 2}, {33, 4}, {45, 5.5}, {59, 7}, {82, 8.5}, {109, 10}}};
inline constexpr std::array<std::array<double, 2>, 6> contrast{
    {{0, 0}, {10, 2}, {25, 4.5}, {40, 6.5}, {60, 8.5}, {80, 10}}};
inline constexpr std::array<std::array<double, 2>, 6> sharpness{
    {{0, 0}, {10, 2}, {40, 4}, {120, 6}, {400, 8}, {1500, 10}}};
// quality points subtracted as block-edge steps exceed interior steps
inline constexpr std::array<std::array<double, 2>, 3> blockiness_penalty{{{1.2, 0}, {2.0, 3}, {4.0, 6}}};
}  // namespace calibration

inline ImageMetrics image_metrics(const ColorFrame& f) {
  ImageMetrics m;
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
  if (n == 0) return m;

  double srg = 0, syb = 0, srg2 = 0, syb2 = 0;
  std::vector<double> y(n);
  double sy = 0, sy2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = f.rgb[3 * i], g = f.rgb[3 * i + 1], b = f.rgb[3 * i + 2];
    const double rg = r - g, yb = 0.5 * (r + g) - b;
    srg += rg;
    syb += yb;
    srg2 += rg * rg;
    syb2 += yb * yb;
    y[i] = luma_bt601(f.rgb[3 * i], f.rgb[3 * i + 1], f.rgb[3 * i + 2]);
    sy += y[i];
    sy2 += y[i] * y[i];
  }
  const double dn = static_cast<double>(n);
  const double mrg = srg / dn, myb = syb / dn;
  const double vrg = std::max(0.0, srg2 / dn - mrg * mrg), vyb = std::max(0.0, syb2 / dn - myb * myb);
  m.colorfulness = std::sqrt(vrg + vyb) + 0.3 * std::sqrt(mrg * mrg + myb * myb);
  const double my = sy / dn;
  m.contrast = std::sqrt(std::max(0.0, sy2 / dn - my * my));

  const int w = f.width, h = f.height;
  auto Y = [&](int xx, int yy) { return y[static_cast<std::size_t>(yy) * w + xx]; };
  if (w >= 3 && h >= 3) {
    double sl = 0, sl2 = 0;
    std::size_t cnt = 0;
    for (int yy = 1; yy + 1 < h; ++yy)
      for (int xx = 1; xx + 1 < w; ++xx) {
        const double lap = Y(xx - 1, yy) + Y(xx + 1, yy) + Y(xx, yy - 1) + Y(xx, yy + 1) - 4 * Y(xx, yy);
        sl += lap;
        sl2 += lap * lap;
        ++cnt;
      }
    const double ml = sl / static_cast<double>(cnt);
    m.sharpness = std::max(0.0, sl2 / static_cast<double>(cnt) - ml * ml);
  }

  double edge = 0, inner = 0;
  std::size_t ne = 0, ni = 0;
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx + 1 < w; ++xx) {
      const double d = std::abs(Y(xx + 1, yy) - Y(xx, yy));
      if (xx % 8 == 7) edge += d, ++ne;
      else inner += d, ++ni;
    }
  for (int yy = 0; yy + 1 < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      const double d = std::abs(Y(xx, yy + 1) - Y(xx, yy));
      if (yy % 8 == 7) edge += d, ++ne;
      else inner += d, ++ni;
    }
  if (ne && ni && inner > 0) m.blockiness = (edge / static_cast<double>(ne)) / (inner / static_cast<double>(ni));
  return m;
}

inline double aesthetic_from(const ImageMetrics& m) {
  const double s = 0.5 * CalibrationTable{calibration::colorfulness}(m.colorfulness) +
                   0.5 * CalibrationTable{calibration::contrast}(m.contrast);
  return std::clamp(s, 0.0, 10.0);
}

inline double quality_from(const ImageMetrics& m) {
  const double s = CalibrationTable{calibration::sharpness}(m.sharpness) -
                   CalibrationTable{calibration::blockiness_penalty}(m.blockiness);
  return std::clamp(s, 0.0, 10.0);
}

/// Mean of the per-frame proxy scores.
inline ScoreRecord score_builtin(std::span<const ColorFrame> frames, std::string clip_id = {}) {
  if (frames.empty()) throw Error(ErrorCode::NoFrames, "score_builtin: no frames");
  ScoreRecord r;
  r.clip_id = std::move(clip_id);
  for (const auto& f : frames) {
    const auto m = image_metrics(f);
    r.aesthetic += aesthetic_from(m);
    r.quality += quality_from(m);
  }
  r.aesthetic /= static_cast<double>(frames.size());
  r.quality /= static_cast<double>(frames.size());
  r.provenance = ScorerProvenance::BuiltinProxy;
  return r;
}

/// POSTs RGB frames and expects {"aesthetic": 0..10, "quality": 0..10}.
class ScorerClient {
 public:
  explicit ScorerClient(ServiceConfig cfg, Sleeper sleeper = real_sleep)
      : client_(std::move(cfg), std::move(sleeper)) {}

  const ServiceConfig& config() const { return client_.config(); }

  ScoreRecord score(std::span<const ColorFrame> frames, std::string clip_id) const {
    json payload = rgb_payload(frames);
    payload["clip_id"] = clip_id;
    const json body = client_.post(payload).body;
    ScoreRecord r;
    r.clip_id = std::move(clip_id);
    r.aesthetic = detail::require_number(body, "aesthetic", 0.0, 10.0);
    r.quality = detail::require_number(body, "quality", 0.0, 10.0);
    r.provenance = ScorerProvenance::External;
    return r;
  }

 private:
  JsonClient client_;
};

/// External scores, or the builtin proxy when the service is unavailable and
/// fallback is enabled.
inline ScoreRecord score_remote(std::span<const ColorFrame> frames, const ScorerClient& client,
                                std::string clip_id = {}) {
  if (frames.empty()) throw Error(ErrorCode::NoFrames, "score_remote: no frames");
  try {
    return client.score(frames, clip_id);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ServiceUnavailable || !client.config().fallback) throw;
  }
  return score_builtin(frames, std::move(clip_id));
}

struct FilterConfig {
  double theta_aes = 3.5;
  double theta_qual = 4.0;
  double c5_quota = 0.05;
  std::string quota_seed = "clipcurate";

  void validate() const {
    if (!(theta_aes >= 0 && theta_aes <= 10) || !(theta_qual >= 0 && theta_qual <= 10))
      throw Error(ErrorCode::InvalidConfig, "filter thresholds must be in [0,10]");
    if (!(c5_quota >= 0 && c5_quota <= 1)) throw Error(ErrorCode::InvalidConfig, "filter.c5_quota must be in [0,1]");
  }
};

// InsufficientFrames is assigned by the pipeline when a kept clip is too
// short for its sampling plan; decide() never returns it.
enum class Reason { Kept, KeptStatic, Edited, StaticQuota, LowAesthetic, LowQuality, InsufficientFrames };

inline const char* to_string(Reason r) {
  switch (r) {
    case Reason::Kept: return "kept";
    case Reason::KeptStatic: return "kept_static";
    case Reason::Edited: return "edited";
    case Reason::StaticQuota: return "static_quota";
    case Reason::LowAesthetic: return "low_aesthetic";
    case Reason::LowQuality: return "low_quality";
    case Reason::InsufficientFrames: return "insufficient_frames";
  }
  return "?";
}

inline Reason reason_from_string(const std::string& s) {
  for (Reason r : {Reason::Kept, Reason::KeptStatic, Reason::Edited, Reason::StaticQuota, Reason::LowAesthetic,
                   Reason::LowQuality, Reason::InsufficientFrames})
    if (s == to_string(r)) return r;
  throw Error(ErrorCode::InvalidArgument, "unknown decision reason '" + s + "'");
}

struct Decision {
  std::string clip_id;
  bool keep = false;
  Reason reason = Reason::Kept;

  bool operator==(const Decision&) const = default;
};

/// True when the clip falls inside the deterministic static-clip quota.
inline bool in_static_quota(const std::string& clip_id, const FilterConfig& cfg) {
  return unit_interval(fnv1a64(cfg.quota_seed + clip_id)) < cfg.c5_quota;
}

inline Decision decide(const ScoreRecord& s, MotionClass label, const FilterConfig& cfg) {
  Decision d{s.clip_id, false, Reason::Kept};
  if (label == MotionClass::C6) {
    d.reason = Reason::Edited;
    return d;
  }
  if (label == MotionClass::C5 && !in_static_quota(s.clip_id, cfg)) {
    d.reason = Reason::StaticQuota;
    return d;
  }
  if (s.aesthetic < cfg.theta_aes) {
    d.reason = Reason::LowAesthetic;
    return d;
  }
  if (s.quality < cfg.theta_qual) {
    d.reason = Reason::LowQuality;
    return d;
  }
  d.keep = true;
  d.reason = label == MotionClass::C5 ? Reason::KeptStatic : Reason::Kept;
  return d;
}

struct ScoredClip {
  ScoreRecord scores;
  MotionClass label = MotionClass::C4;
};

inline std::vector<Decision> apply_filter(std::span<const ScoredClip> clips, const FilterConfig& cfg) {
  std::vector<Decision> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(decide(c.scores, c.label, cfg));
  return out;
}

}  // namespace clipcurate
