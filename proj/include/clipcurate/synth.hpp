#pragma once

// Deterministic synthetic footage: periodic value-noise textures moved by a
// known camera model. Used to calibrate thresholds and as ground truth for
// flow, global-motion and taxonomy tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "clipcurate/error.hpp"
#include "clipcurate/flow.hpp"
#include "clipcurate/hashing.hpp"
#include "clipcurate/media.hpp"

namespace clipcurate::synth {

/// Periodic RGB texture; sampling wraps in both axes.
class Texture {
 public:
  Texture(std::uint64_t seed, int size = 512, double lo = 30.0, double hi = 225.0,
          double chroma = 40.0)
      : size_(size), px_(static_cast<std::size_t>(size) * size * 3) {
    const auto lum = noise_field(seed, {64, 32, 16, 8, 4, 2}, {1.0, 0.8, 0.6, 0.45, 0.3, 0.25});
    const auto cr = noise_field(seed ^ 0x9e3779b97f4a7c15ULL, {128, 64}, {1.0, 0.5});
    const auto cb = noise_field(seed ^ 0xc2b2ae3d27d4eb4fULL, {128, 64}, {1.0, 0.5});
    for (std::size_t i = 0; i < lum.size(); ++i) {
      const double y = lo + (hi - lo) * lum[i];
      const double r = (cr[i] - 0.5) * 2 * chroma;
      const double b = (cb[i] - 0.5) * 2 * chroma;
      px_[3 * i] = static_cast<float>(std::clamp(y + r, 0.0, 255.0));
      px_[3 * i + 1] = static_cast<float>(std::clamp(y - 0.5 * (r + b), 0.0, 255.0));
      px_[3 * i + 2] = static_cast<float>(std::clamp(y + b, 0.0, 255.0));
    }
  }

  int size() const { return size_; }

  void sample(double x, double y, float out[3]) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int x0 = wrap(static_cast<long long>(fx));
    const int y0 = wrap(static_cast<long long>(fy));
    const int x1 = (x0 + 1) % size_;
    const int y1 = (y0 + 1) % size_;
    const auto ax = static_cast<float>(x - fx);
    const auto ay = static_cast<float>(y - fy);
    const float* p00 = at(x0, y0);
    const float* p10 = at(x1, y0);
    const float* p01 = at(x0, y1);
    const float* p11 = at(x1, y1);
    for (int c = 0; c < 3; ++c)
      out[c] = (1 - ay) * ((1 - ax) * p00[c] + ax * p10[c]) + ay * ((1 - ax) * p01[c] + ax * p11[c]);
  }

 private:
  int wrap(long long v) const {
    const long long m = v % size_;
    return static_cast<int>(m < 0 ? m + size_ : m);
  }
  const float* at(int x, int y) const {
    return px_.data() + 3 * (static_cast<std::size_t>(y) * size_ + x);
  }

  // Sum of periodic value-noise octaves normalised to [0, 1].
  std::vector<double> noise_field(std::uint64_t seed, std::vector<int> periods,
                                  std::vector<double> amps) const {
    const auto n = static_cast<std::size_t>(size_);
    std::vector<double> acc(n * n, 0.0);
    for (std::size_t o = 0; o < periods.size(); ++o) {
      const int period = std::min(periods[o], size_);
      const int cells = size_ / period;
      std::mt19937_64 rng(seed * 1000003ULL + o);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      std::vector<double> lattice(static_cast<std::size_t>(cells) * cells);
      for (auto& v : lattice) v = uni(rng);
      auto L = [&](int i, int j) {
        return lattice[static_cast<std::size_t>(j % cells) * cells + (i % cells)];
      };
      for (int y = 0; y < size_; ++y) {
        const int j = y / period;
        double ty = static_cast<double>(y % period) / period;
        ty = ty * ty * (3 - 2 * ty);
        for (int x = 0; x < size_; ++x) {
          const int i = x / period;
          double tx = static_cast<double>(x % period) / period;
          tx = tx * tx * (3 - 2 * tx);
          const double v = (1 - ty) * ((1 - tx) * L(i, j) + tx * L(i + 1, j)) +
                           ty * ((1 - tx) * L(i, j + 1) + tx * L(i + 1, j + 1));
          acc[static_cast<std::size_t>(y) * n + x] += amps[o] * v;
        }
      }
    }
    const auto [mn, mx] = std::minmax_element(acc.begin(), acc.end());
    const double lo = *mn, span = std::max(*mx - *mn, 1e-12);
    for (auto& v : acc) v = (v - lo) / span;
    return acc;
  }

  int size_;
  std::vector<float> px_;
};

enum class Motion {
  Static,     // no camera motion
  Pan,        // constant translation
  Oscillate,  // sinusoidal pan/tilt back and forth
  Rotate,     // roll about the frame centre
  Zoom,       // isotropic scale about the frame centre
  Track,      // frame-locked subject over a streaming background
  Parallax,   // two depth layers translating in opposite directions
  Crossfade,  // pan, dissolve into a second scene, pan on
  HardCut,    // pan, instantaneous switch to a second scene
};

inline const char* to_string(Motion m) {
  switch (m) {
    case Motion::Static: return "static";
    case Motion::Pan: return "pan";
    case Motion::Oscillate: return "oscillate";
    case Motion::Rotate: return "rotate";
    case Motion::Zoom: return "zoom";
    case Motion::Track: return "track";
    case Motion::Parallax: return "parallax";
    case Motion::Crossfade: return "crossfade";
    case Motion::HardCut: return "hardcut";
  }
  return "?";
}

inline Motion motion_from_string(const std::string& s) {
  for (Motion m : {Motion::Static, Motion::Pan, Motion::Oscillate, Motion::Rotate, Motion::Zoom,
                   Motion::Track, Motion::Parallax, Motion::Crossfade, Motion::HardCut})
    if (s == to_string(m)) return m;
  throw Error(ErrorCode::InvalidArgument, "unknown synthetic motion '" + s + "'");
}

/// Scene description. All rates are per frame, in analysis-frame pixels of
/// the rendered size; `velocity` is the on-screen content displacement.
struct Scene {
  Motion motion = Motion::Pan;
  int width = 320;
  int height = 180;
  int frames = 60;
  Rational fps{30, 1};
  std::uint64_t seed = 1;
  Vec2 velocity{3.0, 0.0};
  double amplitude = 3.0;  // Oscillate: peak per-frame displacement
  double period = 30.0;    // Oscillate: frames per cycle
  double rot_rate = 0.01;  // Rotate: radians per frame
  double zoom_rate = 0.01; // Zoom: relative scale change per frame
  int event_frame = 30;    // Crossfade/HardCut: first frame of the transition
  int fade_len = 8;
  double noise_sigma = 0.0;
  double brightness_b = 0.0; // luma offset of the second scene
};

class Renderer {
 public:
  explicit Renderer(const Scene& scene)
      : scene_(scene),
        tex_a_(scene.seed),
        tex_b_(scene.seed * 7919 + 17, 512, 30.0 + scene.brightness_b,
               225.0 + scene.brightness_b) {}

  const Scene& scene() const { return scene_; }

  /// Interleaved RGB24 frame `t`.
  std::vector<std::uint8_t> rgb(int t) const {
    const int w = scene_.width, h = scene_.height;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 3);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    std::mt19937_64 rng(fnv1a64(std::to_string(scene_.seed) + ":" + std::to_string(t)));
    std::normal_distribution<double> noise(0.0, std::max(scene_.noise_sigma, 1e-12));
    float a[3], b[3];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        shade(x, y, cx, cy, t, a, b);
        std::uint8_t* px = out.data() + 3 * (static_cast<std::size_t>(y) * w + x);
        for (int c = 0; c < 3; ++c) {
          double v = a[c];
          if (scene_.noise_sigma > 0) v += noise(rng);
          px[c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
      }
    return out;
  }

  FrameBuffer luma_frame(int t) const {
    FrameBuffer f;
    f.index = t;
    f.timestamp_s = t * static_cast<double>(scene_.fps.den) / scene_.fps.num;
    f.width = scene_.width;
    f.height = scene_.height;
    f.luma = rgb_to_luma(rgb(t));
    return f;
  }

  ColorFrame color_frame(int t) const {
    ColorFrame f;
    f.index = t;
    f.timestamp_s = t * static_cast<double>(scene_.fps.den) / scene_.fps.num;
    f.width = scene_.width;
    f.height = scene_.height;
    f.rgb = rgb(t);
    return f;
  }

 private:
  void shade(int x, int y, double cx, double cy, int t, float out[3], float tmp[3]) const {
    const auto& s = scene_;
    const double vx = s.velocity.u, vy = s.velocity.v;
    switch (s.motion) {
      case Motion::Static: tex_a_.sample(x, y, out); return;
      case Motion::Pan: tex_a_.sample(x - vx * t, y - vy * t, out); return;
      case Motion::Oscillate: {
        // per-frame displacement amplitude*cos(...) integrates to this offset
        const double w = 2 * std::numbers::pi / s.period;
        const double off = s.amplitude * std::sin(w * t) / w;
        const double nx = vx, ny = vy;
        const double norm = std::max(std::hypot(nx, ny), 1e-12);
        tex_a_.sample(x - off * nx / norm, y - off * ny / norm, out);
        return;
      }
      case Motion::Rotate: {
        const double th = -s.rot_rate * t;
        const double dx = x - cx, dy = y - cy;
        tex_a_.sample(std::cos(th) * dx - std::sin(th) * dy + cx,
                      std::sin(th) * dx + std::cos(th) * dy + cy, out);
        return;
      }
      case Motion::Zoom: {
        const double k = std::pow(1.0 + s.zoom_rate, -t);
        tex_a_.sample((x - cx) * k + cx, (y - cy) * k + cy, out);
        return;
      }
      case Motion::Track: {
        const double hw = 0.2 * s.width, hh = 0.2 * s.height;
        if (std::abs(x - cx) <= hw && std::abs(y - cy) <= hh) {
          tex_b_.sample(x, y, out);
        } else {
          tex_a_.sample(x - vx * t, y - vy * t, out);
        }
        return;
      }
      case Motion::Parallax: {
        const double split = 0.5 * s.height;
        if (y < split) tex_a_.sample(x + vx * t, y + vy * t, out);
        else tex_b_.sample(x - vx * t, y - vy * t, out);
        return;
      }
      case Motion::Crossfade: {
        tex_a_.sample(x - vx * t, y - vy * t, out);
        if (t < s.event_frame) return;
        tex_b_.sample(x + vy * t, y - vx * t, tmp);
        const double alpha = std::min(1.0, (t - s.event_frame + 1.0) / (s.fade_len + 1.0));
        for (int c = 0; c < 3; ++c)
          out[c] = static_cast<float>((1 - alpha) * out[c] + alpha * tmp[c]);
        return;
      }
      case Motion::HardCut:
        if (t < s.event_frame) tex_a_.sample(x - vx * t, y - vy * t, out);
        else tex_b_.sample(x - vx * t, y - vy * t, out);
        return;
    }
  }

  Scene scene_;
  Texture tex_a_;
  Texture tex_b_;
};

/// Full-range BT.601 4:4:4 Y4M. Y is exactly `luma_bt601` of the RGB frame.
inline void write_y4m_header(std::ostream& out, int width, int height, Rational fps) {
  out << "YUV4MPEG2 W" << width << " H" << height << " F" << fps.num << ':' << fps.den
      << " Ip A1:1 C444 XCOLORRANGE=FULL\n";
}

inline void write_y4m_frame(std::ostream& out, std::span<const std::uint8_t> rgb) {
  const std::size_t n = rgb.size() / 3;
  std::vector<std::uint8_t> planes(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = rgb[3 * i], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
    planes[i] = luma_bt601(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
    planes[n + i] = detail::clamp_u8(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
    planes[2 * n + i] = detail::clamp_u8(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
  }
  out << "FRAME\n";
  out.write(reinterpret_cast<const char*>(planes.data()), static_cast<std::streamsize>(planes.size()));
}

inline void write_y4m(std::ostream& out, const Scene& scene) {
  Renderer r(scene);
  write_y4m_header(out, scene.width, scene.height, scene.fps);
  for (int t = 0; t < scene.frames; ++t) write_y4m_frame(out, r.rgb(t));
}

/// Frame `f` of a fixed texture displaced by (dx, dy): the basic flow ground truth.
inline FrameBuffer shifted_texture(const Texture& tex, int width, int height, double dx,
                                   double dy, std::int64_t index = 0) {
  FrameBuffer f;
  f.index = index;
  f.width = width;
  f.height = height;
  f.luma.resize(static_cast<std::size_t>(width) * height);
  float px[3];
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      tex.sample(x - dx, y - dy, px);
      const auto q = [](float v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5f), 0.f, 255.f)); };
      f.luma[static_cast<std::size_t>(y) * width + x] = luma_bt601(q(px[0]), q(px[1]), q(px[2]));
    }
  return f;
}

}  // namespace clipcurate::synth
