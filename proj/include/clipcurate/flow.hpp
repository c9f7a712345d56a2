#pragma once

// Sparse pyramidal Lucas-Kanade flow on a regular grid, plus the summary
// statistics the segmenter gates on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "clipcurate/error.hpp"
#include "clipcurate/media.hpp"

namespace clipcurate {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec2 {
  double u = 0.0;
  double v = 0.0;

  double norm() const { return std::hypot(u, v); }
};

struct FlowConfig {
  int grid_spacing = 16;
  int pyramid_levels = 3;
  int window = 15;
  int max_iters = 20;
  double residual_max = 10.0;  // mean |I - J| over the window, gray levels
  double min_eigen = 1e-3;     // smaller eigenvalue of the normal matrix / window area
  double epsilon = 0.01;       // per-iteration update below which a level converges

  void validate() const {
    if (grid_spacing < 1) throw Error(ErrorCode::InvalidConfig, "flow.grid_spacing must be >= 1");
    if (pyramid_levels < 1)
      throw Error(ErrorCode::InvalidConfig, "flow.pyramid_levels must be >= 1");
    if (window < 3 || window % 2 == 0)
      throw Error(ErrorCode::InvalidConfig, "flow.window must be odd and >= 3");
    if (max_iters < 1) throw Error(ErrorCode::InvalidConfig, "flow.max_iters must be >= 1");
    if (!(residual_max > 0.0)) throw Error(ErrorCode::InvalidConfig, "flow.residual_max must be > 0");
  }
};

/// Displacements from `prev` to `next` at grid points. `residuals` holds the
/// final photometric error per point (NaN where tracking never converged).
struct FlowField {
  int frame_width = 0;
  int frame_height = 0;
  int grid_spacing = 0;
  std::vector<Point2> points;
  std::vector<Vec2> vectors;
  std::vector<std::uint8_t> valid_mask;
  std::vector<double> residuals;

  std::size_t size() const { return points.size(); }
  bool valid(std::size_t i) const { return valid_mask[i] != 0; }
  Point2 center() const { return {(frame_width - 1) / 2.0, (frame_height - 1) / 2.0}; }
};

struct FlowStats {
  Vec2 mean_vector;
  double mean_magnitude = 0.0;
  double median_magnitude = 0.0;
  double p95_magnitude = 0.0;
  double valid_fraction = 0.0;
  std::size_t valid_count = 0;
};

namespace detail {

struct Plane {
  int w = 0;
  int h = 0;
  std::vector<float> px;

  float at(int x, int y) const {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return px[static_cast<std::size_t>(y) * w + x];
  }

  float sample(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx);
    const int y0 = static_cast<int>(fy);
    const auto ax = static_cast<float>(x - fx);
    const auto ay = static_cast<float>(y - fy);
    if (x0 >= 0 && y0 >= 0 && x0 + 1 < w && y0 + 1 < h) {
      const float* r0 = px.data() + static_cast<std::size_t>(y0) * w + x0;
      const float* r1 = r0 + w;
      return (1 - ay) * ((1 - ax) * r0[0] + ax * r0[1]) + ay * ((1 - ax) * r1[0] + ax * r1[1]);
    }
    return (1 - ay) * ((1 - ax) * at(x0, y0) + ax * at(x0 + 1, y0)) +
           ay * ((1 - ax) * at(x0, y0 + 1) + ax * at(x0 + 1, y0 + 1));
  }

  // Bilinear samples of the (2r+1)^2 window centred at (x, y), row-major.
  // All taps share one fractional offset, so weights are computed once.
  void sample_window(double x, double y, int r, float* out) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = static_cast<int>(fx) - r;
    const int y0 = static_cast<int>(fy) - r;
    const int n = 2 * r + 1;
    const auto ax = static_cast<float>(x - fx);
    const auto ay = static_cast<float>(y - fy);
    const float w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay);
    const float w01 = (1 - ax) * ay, w11 = ax * ay;
    if (x0 >= 0 && y0 >= 0 && x0 + n < w && y0 + n < h) {
      for (int j = 0; j < n; ++j) {
        const float* r0 = px.data() + static_cast<std::size_t>(y0 + j) * w + x0;
        const float* r1 = r0 + w;
        for (int i = 0; i < n; ++i)
          *out++ = w00 * r0[i] + w10 * r0[i + 1] + w01 * r1[i] + w11 * r1[i + 1];
      }
      return;
    }
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        *out++ = w00 * at(x0 + i, y0 + j) + w10 * at(x0 + i + 1, y0 + j) +
                 w01 * at(x0 + i, y0 + j + 1) + w11 * at(x0 + i + 1, y0 + j + 1);
  }
};

// [1 4 6 4 1]/16 blur followed by 2:1 decimation.
inline Plane pyr_down(const Plane& src) {
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  Plane tmp{src.w, src.h, std::vector<float>(src.px.size())};
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      float s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * src.at(x + i, y);
      tmp.px[static_cast<std::size_t>(y) * src.w + x] = s;
    }
  Plane out{(src.w + 1) / 2, (src.h + 1) / 2, {}};
  out.px.resize(static_cast<std::size_t>(out.w) * out.h);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      float s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(2 * x, 2 * y + i);
      out.px[static_cast<std::size_t>(y) * out.w + x] = s;
    }
  return out;
}

// Scharr derivatives, normalised to intensity units per pixel.
inline void scharr(const Plane& p, Plane& gx, Plane& gy) {
  gx = Plane{p.w, p.h, std::vector<float>(p.px.size())};
  gy = Plane{p.w, p.h, std::vector<float>(p.px.size())};
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x) {
      const float dx = 3 * (p.at(x + 1, y - 1) - p.at(x - 1, y - 1)) +
                       10 * (p.at(x + 1, y) - p.at(x - 1, y)) +
                       3 * (p.at(x + 1, y + 1) - p.at(x - 1, y + 1));
      const float dy = 3 * (p.at(x - 1, y + 1) - p.at(x - 1, y - 1)) +
                       10 * (p.at(x, y + 1) - p.at(x, y - 1)) +
                       3 * (p.at(x + 1, y + 1) - p.at(x + 1, y - 1));
      const auto i = static_cast<std::size_t>(y) * p.w + x;
      gx.px[i] = dx / 32.f;
      gy.px[i] = dy / 32.f;
    }
}

}  // namespace detail

/// Gaussian pyramid of one frame together with its gradient images.
class FlowPyramid {
 public:
  FlowPyramid() = default;

  FlowPyramid(const FrameBuffer& frame, int levels) {
    if (frame.luma.size() != static_cast<std::size_t>(frame.width) * frame.height)
      throw Error(ErrorCode::InvalidArgument, "luma plane size does not match dimensions");
    width_ = frame.width;
    height_ = frame.height;
    detail::Plane base{frame.width, frame.height, {}};
    base.px.assign(frame.luma.begin(), frame.luma.end());
    lo_ = *std::min_element(frame.luma.begin(), frame.luma.end());
    hi_ = *std::max_element(frame.luma.begin(), frame.luma.end());
    levels_.push_back(std::move(base));
    for (int l = 1; l < levels; ++l) {
      const auto& top = levels_.back();
      if (top.w < 8 || top.h < 8) break;
      levels_.push_back(detail::pyr_down(top));
    }
    gx_.resize(levels_.size());
    gy_.resize(levels_.size());
    for (std::size_t l = 0; l < levels_.size(); ++l) detail::scharr(levels_[l], gx_[l], gy_[l]);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int levels() const { return static_cast<int>(levels_.size()); }
  bool constant() const { return lo_ == hi_; }
  const detail::Plane& level(int l) const { return levels_[static_cast<std::size_t>(l)]; }
  const detail::Plane& grad_x(int l) const { return gx_[static_cast<std::size_t>(l)]; }
  const detail::Plane& grad_y(int l) const { return gy_[static_cast<std::size_t>(l)]; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::uint8_t lo_ = 0;
  std::uint8_t hi_ = 0;
  std::vector<detail::Plane> levels_;
  std::vector<detail::Plane> gx_;
  std::vector<detail::Plane> gy_;
};

/// Grid points inside the frame, one window radius clear of every border,
/// with the leftover margin split evenly between both sides.
inline std::vector<Point2> flow_grid(int width, int height, int spacing, int window) {
  const int margin = window / 2;
  std::vector<Point2> pts;
  const int span_x = width - 1 - 2 * margin;
  const int span_y = height - 1 - 2 * margin;
  if (span_x < 0 || span_y < 0) return pts;
  const int ox = margin + (span_x % spacing) / 2;
  const int oy = margin + (span_y % spacing) / 2;
  for (int y = oy; y <= height - 1 - margin; y += spacing)
    for (int x = ox; x <= width - 1 - margin; x += spacing)
      pts.push_back({static_cast<double>(x), static_cast<double>(y)});
  return pts;
}

inline FlowField estimate_flow(const FlowPyramid& prev, const FlowPyramid& next,
                               const FlowConfig& cfg) {
  cfg.validate();
  if (prev.width() != next.width() || prev.height() != next.height())
    throw Error(ErrorCode::DimensionMismatch, "frame pair dimensions differ");

  FlowField field;
  field.frame_width = prev.width();
  field.frame_height = prev.height();
  field.grid_spacing = cfg.grid_spacing;
  field.points = flow_grid(prev.width(), prev.height(), cfg.grid_spacing, cfg.window);
  const std::size_t n = field.points.size();
  field.vectors.assign(n, Vec2{});
  field.valid_mask.assign(n, 0);
  field.residuals.assign(n, std::numeric_limits<double>::quiet_NaN());
  if (prev.constant() || next.constant()) return field;

  const int radius = cfg.window / 2;
  const auto area = static_cast<double>(cfg.window) * cfg.window;
  const int top = std::min(prev.levels(), next.levels()) - 1;
  std::vector<float> wi(static_cast<std::size_t>(area));
  std::vector<float> wx(wi.size());
  std::vector<float> wy(wi.size());
  std::vector<float> wj(wi.size());

  for (std::size_t p = 0; p < n; ++p) {
    const Point2 pt = field.points[p];
    double gu = 0.0, gv = 0.0;
    bool ok = true;
    double min_eig0 = 0.0;
    for (int l = top; l >= 0; --l) {
      const double s = std::ldexp(1.0, -l);
      const double px = pt.x * s;
      const double py = pt.y * s;
      const auto& I = prev.level(l);
      const auto& J = next.level(l);
      const auto& Ix = prev.grad_x(l);
      const auto& Iy = prev.grad_y(l);
      I.sample_window(px, py, radius, wi.data());
      Ix.sample_window(px, py, radius, wx.data());
      Iy.sample_window(px, py, radius, wy.data());
      double sxx = 0, sxy = 0, syy = 0;
      for (std::size_t k = 0; k < wi.size(); ++k) {
        sxx += static_cast<double>(wx[k]) * wx[k];
        sxy += static_cast<double>(wx[k]) * wy[k];
        syy += static_cast<double>(wy[k]) * wy[k];
      }
      const double tr = (sxx + syy) / 2.0;
      const double disc = std::sqrt(std::max(0.0, (sxx - syy) * (sxx - syy) / 4.0 + sxy * sxy));
      const double min_eig = (tr - disc) / area;
      const double det = sxx * syy - sxy * sxy;
      if (l == 0) min_eig0 = min_eig;
      double vu = 0.0, vv = 0.0;
      if (min_eig >= cfg.min_eigen && det > 0.0) {
        for (int it = 0; it < cfg.max_iters; ++it) {
          J.sample_window(px + gu + vu, py + gv + vv, radius, wj.data());
          double bx = 0, by = 0;
          for (std::size_t k = 0; k < wi.size(); ++k) {
            const double diff = static_cast<double>(wi[k]) - wj[k];
            bx += diff * wx[k];
            by += diff * wy[k];
          }
          const double du = (syy * bx - sxy * by) / det;
          const double dv = (sxx * by - sxy * bx) / det;
          vu += du;
          vv += dv;
          if (!std::isfinite(vu) || !std::isfinite(vv)) {
            ok = false;
            break;
          }
          if (du * du + dv * dv < cfg.epsilon * cfg.epsilon) break;
        }
      }
      if (!ok) break;
      if (l > 0) {
        gu = 2.0 * (gu + vu);
        gv = 2.0 * (gv + vv);
      } else {
        gu += vu;
        gv += vv;
      }
    }
    if (!ok) continue;
    field.vectors[p] = {gu, gv};

    prev.level(0).sample_window(pt.x, pt.y, radius, wi.data());
    next.level(0).sample_window(pt.x + gu, pt.y + gv, radius, wj.data());
    double res = 0.0;
    for (std::size_t k = 0; k < wi.size(); ++k)
      res += std::abs(static_cast<double>(wi[k]) - wj[k]);
    res /= area;
    field.residuals[p] = res;

    const double ex = pt.x + gu;
    const double ey = pt.y + gv;
    const bool inside = ex >= 0.0 && ey >= 0.0 && ex <= field.frame_width - 1.0 &&
                        ey <= field.frame_height - 1.0;
    field.valid_mask[p] = (inside && min_eig0 >= cfg.min_eigen && res <= cfg.residual_max) ? 1 : 0;
  }
  return field;
}

inline FlowField estimate_flow(const FrameBuffer& prev, const FrameBuffer& next,
                               const FlowConfig& cfg = {}) {
  cfg.validate();
  if (prev.width != next.width || prev.height != next.height)
    throw Error(ErrorCode::DimensionMismatch, "frame pair dimensions differ");
  return estimate_flow(FlowPyramid(prev, cfg.pyramid_levels),
                       FlowPyramid(next, cfg.pyramid_levels), cfg);
}

/// Statistics over valid points only; an empty selection yields all zeros.
inline FlowStats flow_stats(const FlowField& field) {
  FlowStats st;
  std::vector<double> mags;
  mags.reserve(field.size());
  double su = 0, sv = 0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (!field.valid(i)) continue;
    su += field.vectors[i].u;
    sv += field.vectors[i].v;
    mags.push_back(field.vectors[i].norm());
  }
  if (mags.empty()) return st;
  const auto n = static_cast<double>(mags.size());
  st.valid_count = mags.size();
  st.valid_fraction = n / static_cast<double>(field.size());
  st.mean_vector = {su / n, sv / n};
  double total = 0;
  for (double m : mags) total += m;
  st.mean_magnitude = total / n;
  std::sort(mags.begin(), mags.end());
  const std::size_t mid = mags.size() / 2;
  st.median_magnitude = mags.size() % 2 ? mags[mid] : 0.5 * (mags[mid - 1] + mags[mid]);
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  st.p95_magnitude = mags[std::max<std::size_t>(rank, 1) - 1];
  return st;
}

}  // namespace clipcurate
