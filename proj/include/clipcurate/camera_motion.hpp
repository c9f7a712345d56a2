#pragma once

// Global affine motion per frame pair and a rule cascade that assigns each
// clip one of six camera-motion classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "clipcurate/error.hpp"
#include "clipcurate/flow.hpp"

namespace clipcurate {

/// (x, y) -> (a x + b y + tx, c x + d y + ty) in frame-centred coordinates.
struct GlobalMotion {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;
  double tx = 0.0, ty = 0.0;
  double inlier_fraction = 1.0;
  double rms_residual = 0.0;
  std::size_t inlier_count = 0;

  double divergence() const { return ((a - 1.0) + (d - 1.0)) / 2.0; }
  double curl() const { return (c - b) / 2.0; }
  Vec2 translation() const { return {tx, ty}; }
};

namespace detail {

// Solves the symmetric 3x3 system m * x = r by Gaussian elimination with
// partial pivoting. Returns false when the system is numerically singular.
inline bool solve3(std::array<double, 9> m, std::array<double, 3> r, std::array<double, 3>& x) {
  double scale = 0.0;
  for (double v : m) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return false;
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(m[row * 3 + col]) > std::abs(m[piv * 3 + col])) piv = row;
    if (std::abs(m[piv * 3 + col]) < 1e-12 * scale) return false;
    if (piv != col) {
      for (int k = 0; k < 3; ++k) std::swap(m[col * 3 + k], m[piv * 3 + k]);
      std::swap(r[col], r[piv]);
    }
    for (int row = col + 1; row < 3; ++row) {
      const double f = m[row * 3 + col] / m[col * 3 + col];
      for (int k = col; k < 3; ++k) m[row * 3 + k] -= f * m[col * 3 + k];
      r[row] -= f * r[col];
    }
  }
  for (int row = 2; row >= 0; --row) {
    double s = r[row];
    for (int k = row + 1; k < 3; ++k) s -= m[row * 3 + k] * x[k];
    x[row] = s / m[row * 3 + row];
  }
  return true;
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Least-squares affine fit to the valid flow vectors, refined by two rounds
/// that keep only points with residual below 3x the median residual.
inline GlobalMotion fit_global_motion(const FlowField& field) {
  const Point2 ctr = field.center();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.valid(i)) idx.push_back(i);
  if (idx.size() < 6)
    throw Error(ErrorCode::InsufficientPoints,
                "global motion fit needs >= 6 valid points, have " + std::to_string(idx.size()));

  GlobalMotion g;
  std::vector<std::uint8_t> use(idx.size(), 1);
  std::vector<double> res(idx.size(), 0.0);

  auto fit = [&]() {
    std::array<double, 9> m{};
    std::array<double, 3> ru{}, rv{};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (!use[k]) continue;
      const auto i = idx[k];
      const double x = field.points[i].x - ctr.x, y = field.points[i].y - ctr.y;
      const double row[3] = {x, y, 1.0};
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) m[p * 3 + q] += row[p] * row[q];
        ru[p] += row[p] * field.vectors[i].u;
        rv[p] += row[p] * field.vectors[i].v;
      }
    }
    std::array<double, 3> pu{}, pv{};
    if (!detail::solve3(m, ru, pu) || !detail::solve3(m, rv, pv))
      throw Error(ErrorCode::InsufficientPoints, "global motion fit: degenerate point layout");
    // flow u = (a-1) x + b y + tx, v = c x + (d-1) y + ty
    g.a = 1.0 + pu[0];
    g.b = pu[1];
    g.tx = pu[2];
    g.c = pv[0];
    g.d = 1.0 + pv[1];
    g.ty = pv[2];
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto i = idx[k];
      const double x = field.points[i].x - ctr.x, y = field.points[i].y - ctr.y;
      const double eu = field.vectors[i].u - (pu[0] * x + pu[1] * y + pu[2]);
      const double ev = field.vectors[i].v - (pv[0] * x + pv[1] * y + pv[2]);
      res[k] = std::hypot(eu, ev);
    }
  };

  fit();
  for (int round = 0; round < 2; ++round) {
    const double thr = 3.0 * detail::median_of(res) + 1e-9;
    std::size_t kept = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) kept += res[k] < thr;
    if (kept < 6) break;
    for (std::size_t k = 0; k < idx.size(); ++k) use[k] = res[k] < thr;
    fit();
  }

  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (use[k]) {
      ss += res[k] * res[k];
      ++n;
    }
  g.inlier_count = n;
  g.inlier_fraction = static_cast<double>(n) / static_cast<double>(idx.size());
  g.rms_residual = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
  return g;
}

/// Flow summary for the middle third of the frame and for the outer ring
/// (points outside the middle two thirds). Fields are NaN when a region has
/// no valid points.
struct RegionFlow {
  double center_magnitude = std::numeric_limits<double>::quiet_NaN();
  Vec2 border_mean{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  std::size_t center_count = 0;
  std::size_t border_count = 0;
};

inline RegionFlow region_flow(const FlowField& field) {
  RegionFlow r;
  const Point2 ctr = field.center();
  const double cw = field.frame_width / 6.0, ch = field.frame_height / 6.0;
  const double bw = field.frame_width / 3.0, bh = field.frame_height / 3.0;
  double cmag = 0.0, bu = 0.0, bv = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!field.valid(i)) continue;
    const double dx = std::abs(field.points[i].x - ctr.x), dy = std::abs(field.points[i].y - ctr.y);
    if (dx <= cw && dy <= ch) {
      cmag += field.vectors[i].norm();
      ++r.center_count;
    } else if (dx > bw || dy > bh) {
      bu += field.vectors[i].u;
      bv += field.vectors[i].v;
      ++r.border_count;
    }
  }
  if (r.center_count) r.center_magnitude = cmag / static_cast<double>(r.center_count);
  if (r.border_count)
    r.border_mean = {bu / static_cast<double>(r.border_count), bv / static_cast<double>(r.border_count)};
  return r;
}

/// Everything the classifier looks at for one frame pair.
struct PairMotion {
  GlobalMotion global;
  bool fit_ok = false;
  RegionFlow region;
  double valid_fraction = 0.0;
  double mean_magnitude = 0.0;  // over valid flow vectors
  double luma_step = 0.0;       // |mean luma(next) - mean luma(prev)|
};

inline PairMotion analyze_pair(const FlowField& field, double luma_step = 0.0) {
  PairMotion p;
  p.region = region_flow(field);
  p.luma_step = luma_step;
  std::size_t valid = 0;
  double mag = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i)
    if (field.valid(i)) {
      ++valid;
      mag += field.vectors[i].norm();
    }
  p.valid_fraction = field.size() ? static_cast<double>(valid) / static_cast<double>(field.size()) : 0.0;
  p.mean_magnitude = valid ? mag / static_cast<double>(valid) : 0.0;
  try {
    p.global = fit_global_motion(field);
    p.fit_ok = true;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InsufficientPoints) throw;
  }
  return p;
}

enum class MotionClass { C1 = 1, C2, C3, C4, C5, C6 };

inline const char* to_string(MotionClass c) {
  static constexpr const char* names[] = {"C1", "C2", "C3", "C4", "C5", "C6"};
  return names[static_cast<int>(c) - 1];
}

inline MotionClass motion_class_from_string(const std::string& s) {
  for (int i = 1; i <= 6; ++i)
    if (s == to_string(static_cast<MotionClass>(i))) return static_cast<MotionClass>(i);
  throw Error(ErrorCode::InvalidArgument, "unknown motion class '" + s + "'");
}

inline const char* describe(MotionClass c) {
  switch (c) {
    case MotionClass::C1: return "orbit/self-rotation";
    case MotionClass::C2: return "local tilt/pan oscillation";
    case MotionClass::C3: return "tracking";
    case MotionClass::C4: return "linear motion";
    case MotionClass::C5: return "static";
    case MotionClass::C6: return "edited";
  }
  return "?";
}

struct MotionLabel {
  MotionClass label = MotionClass::C5;
  double confidence = 0.0;
  std::string rule;                      // which cascade step fired, or "remote"
  std::string provenance = "heuristic";  // heuristic | remote | fallback

  bool operator==(const MotionLabel&) const = default;
};

struct ClassifierConfig {
  double static_mag = 0.5;         // px/frame
  double static_rate = 0.002;      // |div|, |curl| per frame
  double rot_rate = 0.004;         // |curl| per frame
  double parallax_inlier = 0.7;
  double parallax_ratio = 0.25;    // rms fit residual / mean flow magnitude
  double residual_spike = 5.0;     // x clip median rms residual
  double residual_floor = 0.25;    // px, spikes must also exceed this
  double edit_frac = 0.02;
  double edit_valid_drop = 0.5;    // pair valid fraction below this x clip median counts as disrupted
  double luma_jump_max = 40.0;
  double track_center_mag = 0.5;   // px/frame
  double track_border_mag = 1.0;   // px/frame, coherent border streaming
  int c2_min_crossings = 2;
  double c2_net_ratio = 0.3;       // |net displacement| / path length along the dominant axis
  double c2_deadband = 0.1;        // px, translation treated as zero inside this band

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw Error(ErrorCode::InvalidConfig, std::string("classifier.") + name + " must be > 0");
    };
    positive(static_mag, "static_mag");
    positive(static_rate, "static_rate");
    positive(rot_rate, "rot_rate");
    positive(residual_spike, "residual_spike");
    positive(residual_floor, "residual_floor");
    positive(parallax_ratio, "parallax_ratio");
    positive(track_center_mag, "track_center_mag");
    positive(track_border_mag, "track_border_mag");
    positive(c2_net_ratio, "c2_net_ratio");
    if (!(edit_frac >= 0.0 && edit_frac < 1.0))
      throw Error(ErrorCode::InvalidConfig, "classifier.edit_frac must be in [0,1)");
    if (!(parallax_inlier > 0.0 && parallax_inlier <= 1.0))
      throw Error(ErrorCode::InvalidConfig, "classifier.parallax_inlier must be in (0,1]");
    if (c2_min_crossings < 1) throw Error(ErrorCode::InvalidConfig, "classifier.c2_min_crossings must be >= 1");
  }
};

/// Time-aggregated statistics the cascade decides on; exposed for debugging.
struct ClipMotionSummary {
  std::size_t pairs = 0;
  double disrupted_fraction = 0.0;
  double median_translation = 0.0;
  double median_abs_div = 0.0;
  double median_abs_curl = 0.0;
  double median_inlier = 0.0;
  double median_nonaffine = 0.0;
  double median_center_mag = std::numeric_limits<double>::quiet_NaN();
  double median_border_mag = std::numeric_limits<double>::quiet_NaN();
  int crossings = 0;
  double net_ratio = 1.0;
};

inline ClipMotionSummary summarize_clip(std::span<const PairMotion> pairs, const ClassifierConfig& cfg) {
  ClipMotionSummary s;
  s.pairs = pairs.size();
  std::vector<double> valid, rms;
  for (const auto& p : pairs) {
    valid.push_back(p.valid_fraction);
    if (p.fit_ok) rms.push_back(p.global.rms_residual);
  }
  const double valid_med = detail::median_of(valid);
  const double spike = rms.empty() ? 0.0 : std::max(cfg.residual_floor, cfg.residual_spike * detail::median_of(rms));

  std::vector<double> trans, adiv, acurl, inl, nonaff, cmag, bmag;
  std::size_t disrupted = 0;
  for (const auto& p : pairs) {
    const bool bad = !p.fit_ok || p.global.rms_residual > spike || p.luma_step > cfg.luma_jump_max ||
                     p.valid_fraction < cfg.edit_valid_drop * valid_med;
    disrupted += bad;
    if (!std::isnan(p.region.center_magnitude)) cmag.push_back(p.region.center_magnitude);
    if (!std::isnan(p.region.border_mean.u)) bmag.push_back(p.region.border_mean.norm());
    if (!p.fit_ok) continue;
    trans.push_back(p.global.translation().norm());
    adiv.push_back(std::abs(p.global.divergence()));
    acurl.push_back(std::abs(p.global.curl()));
    inl.push_back(p.global.inlier_fraction);
    nonaff.push_back(p.global.rms_residual / std::max(p.mean_magnitude, cfg.static_mag));
  }
  s.disrupted_fraction = pairs.empty() ? 0.0 : static_cast<double>(disrupted) / static_cast<double>(pairs.size());
  if (!trans.empty()) {
    s.median_translation = detail::median_of(trans);
    s.median_abs_div = detail::median_of(adiv);
    s.median_abs_curl = detail::median_of(acurl);
    s.median_inlier = detail::median_of(inl);
    s.median_nonaffine = detail::median_of(nonaff);
  }
  s.median_center_mag = detail::median_of(cmag);
  s.median_border_mag = detail::median_of(bmag);

  // sign alternation along whichever axis carries more translation
  double path_x = 0.0, path_y = 0.0, net_x = 0.0, net_y = 0.0;
  for (const auto& p : pairs) {
    if (!p.fit_ok) continue;
    path_x += std::abs(p.global.tx);
    path_y += std::abs(p.global.ty);
    net_x += p.global.tx;
    net_y += p.global.ty;
  }
  const bool use_x = path_x >= path_y;
  const double path = use_x ? path_x : path_y;
  s.net_ratio = path > 0.0 ? std::abs(use_x ? net_x : net_y) / path : 1.0;
  int sign = 0;
  for (const auto& p : pairs) {
    if (!p.fit_ok) continue;
    const double t = use_x ? p.global.tx : p.global.ty;
    if (std::abs(t) <= cfg.c2_deadband) continue;
    const int sg = t > 0 ? 1 : -1;
    if (sign != 0 && sg != sign) ++s.crossings;
    sign = sg;
  }
  return s;
}

namespace detail {
// Maps a non-negative margin to [0.5, 1).
inline double squash(double margin) {
  margin = std::max(0.0, margin);
  return 0.5 + 0.5 * margin / (1.0 + margin);
}
}  // namespace detail

/// Cascade: edited, static, orbit, tracking, oscillation, otherwise linear.
inline MotionLabel classify_clip(std::span<const PairMotion> pairs, const ClassifierConfig& cfg = {}) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyClip, "classify_clip: no frame pairs");
  const ClipMotionSummary s = summarize_clip(pairs, cfg);
  auto label = [](MotionClass c, double margin, const char* rule) {
    return MotionLabel{c, detail::squash(margin), rule, "heuristic"};
  };

  if (s.disrupted_fraction > cfg.edit_frac)
    return label(MotionClass::C6, (s.disrupted_fraction - cfg.edit_frac) / std::max(cfg.edit_frac, 1e-9),
                 "edit_spikes");

  if (s.median_translation < cfg.static_mag && s.median_abs_div < cfg.static_rate &&
      s.median_abs_curl < cfg.static_rate) {
    const double m = std::min({(cfg.static_mag - s.median_translation) / cfg.static_mag,
                               (cfg.static_rate - s.median_abs_div) / cfg.static_rate,
                               (cfg.static_rate - s.median_abs_curl) / cfg.static_rate});
    return label(MotionClass::C5, m, "static");
  }

  if (s.median_abs_curl >= cfg.rot_rate)
    return label(MotionClass::C1, (s.median_abs_curl - cfg.rot_rate) / cfg.rot_rate, "rotation");
  if (s.median_inlier < cfg.parallax_inlier && s.median_translation >= cfg.static_mag)
    return label(MotionClass::C1, (cfg.parallax_inlier - s.median_inlier) / cfg.parallax_inlier,
                 "parallax");
  if (s.median_nonaffine >= cfg.parallax_ratio)
    return label(MotionClass::C1, (s.median_nonaffine - cfg.parallax_ratio) / cfg.parallax_ratio,
                 "parallax");

  if (s.median_center_mag < cfg.track_center_mag && s.median_border_mag >= cfg.track_border_mag) {
    const double m = std::min((cfg.track_center_mag - s.median_center_mag) / cfg.track_center_mag,
                              (s.median_border_mag - cfg.track_border_mag) / cfg.track_border_mag);
    return label(MotionClass::C3, m, "tracking");
  }

  if (s.crossings >= cfg.c2_min_crossings && s.net_ratio < cfg.c2_net_ratio)
    return label(MotionClass::C2, (cfg.c2_net_ratio - s.net_ratio) / cfg.c2_net_ratio, "zero_crossing");

  return label(MotionClass::C4, (s.median_translation - cfg.static_mag) / cfg.static_mag, "linear");
}

/// Convenience form for callers that only have global fits.
inline MotionLabel classify_clip(std::span<const GlobalMotion> motions, const ClassifierConfig& cfg = {}) {
  std::vector<PairMotion> pairs(motions.size());
  for (std::size_t i = 0; i < motions.size(); ++i) {
    pairs[i].global = motions[i];
    pairs[i].fit_ok = true;
    pairs[i].valid_fraction = 1.0;
  }
  return classify_clip(std::span<const PairMotion>(pairs), cfg);
}

}  // namespace clipcurate
