#pragma once

// Labeled synthetic clips for classifier tests: each scene kind is rendered
// with randomized speed, direction, noise and texture seed.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/segmenter.hpp"
#include "clipcurate/synth.hpp"

namespace fixtures {

using clipcurate::MotionClass;
using clipcurate::synth::Motion;
using clipcurate::synth::Scene;

struct LabeledScene {
  Scene scene;
  MotionClass expected;
};

inline std::vector<LabeledScene> taxonomy_suite(int per_class, std::uint64_t seed, int frames = 60) {
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto heading = [&](double speed) {
    const double th = uni(0.0, 2 * std::numbers::pi);
    return clipcurate::Vec2{speed * std::cos(th), speed * std::sin(th)};
  };
  std::vector<LabeledScene> out;
  for (int i = 0; i < per_class; ++i) {
    auto base = [&](Motion m) {
      Scene s;
      s.motion = m;
      s.frames = frames;
      s.seed = rng() % 1000000 + 1;
      s.noise_sigma = uni(0.0, 1.5);
      return s;
    };
    {
      Scene s = base(Motion::Pan);
      s.velocity = heading(uni(1.5, 5.0));
      out.push_back({s, MotionClass::C4});
    }
    {
      Scene s = base(Motion::Oscillate);
      s.velocity = (rng() % 2) ? clipcurate::Vec2{1, 0} : clipcurate::Vec2{0, 1};
      s.amplitude = uni(1.5, 3.0);
      s.period = uni(16.0, 30.0);
      out.push_back({s, MotionClass::C2});
    }
    if (i % 2 == 0) {
      Scene s = base(Motion::Rotate);
      s.rot_rate = uni(0.006, 0.02) * ((rng() % 2) ? 1 : -1);
      out.push_back({s, MotionClass::C1});
    } else {
      Scene s = base(Motion::Parallax);
      s.velocity = heading(uni(1.0, 3.0));
      out.push_back({s, MotionClass::C1});
    }
    {
      Scene s = base(Motion::Track);
      s.velocity = heading(uni(1.5, 4.0));
      out.push_back({s, MotionClass::C3});
    }
    {
      Scene s = base(Motion::Static);
      s.noise_sigma = uni(0.0, 2.0);
      out.push_back({s, MotionClass::C5});
    }
    {
      Scene s = base(Motion::Crossfade);
      s.velocity = heading(uni(1.5, 4.0));
      s.event_frame = static_cast<int>(uni(15, frames - 20));
      s.fade_len = static_cast<int>(uni(4, 12));
      out.push_back({s, MotionClass::C6});
    }
  }
  return out;
}

/// Renders a scene and analyses every adjacent pair.
inline std::vector<clipcurate::PairMotion> analyze_scene(const Scene& scene,
                                                         const clipcurate::FlowConfig& flow = {}) {
  using namespace clipcurate;
  synth::Renderer r(scene);
  std::vector<PairMotion> out;
  FrameBuffer prev = r.luma_frame(0);
  FlowPyramid prev_pyr(prev, flow.pyramid_levels);
  double prev_luma = mean_luma(prev);
  for (int t = 1; t < scene.frames; ++t) {
    FrameBuffer next = r.luma_frame(t);
    FlowPyramid next_pyr(next, flow.pyramid_levels);
    const double next_luma = mean_luma(next);
    out.push_back(analyze_pair(estimate_flow(prev_pyr, next_pyr, flow), std::abs(next_luma - prev_luma)));
    prev_pyr = std::move(next_pyr);
    prev_luma = next_luma;
  }
  return out;
}

}  // namespace fixtures
