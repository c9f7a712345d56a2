#pragma once

// Motion intensity M = N * FPS / clip_n and the trim-then-uniform frame
// sampling plan, plus the fixed-stride sub-clip sampler it replaces.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "clipcurate/error.hpp"

namespace clipcurate {

/// Sampled frames per second of source video.
inline double motion_intensity(std::int64_t n, double fps, std::int64_t clip_n) {
  if (n <= 0 || !(fps > 0.0) || clip_n <= 0)
    throw Error(ErrorCode::NonPositiveInput, "motion_intensity: N, FPS and clip_n must be positive");
  return static_cast<double>(n) * fps / static_cast<double>(clip_n);
}

struct SamplingPlan {
  std::int64_t n = 0;
  double fps = 0.0;
  std::int64_t clip_n = 0;
  double m = 0.0;          // from the untrimmed clip_n
  double m_trimmed = 0.0;  // same formula over the frames left after trimming
  double trim_fraction = 0.10;
  std::int64_t first = 0;
  std::int64_t last = 0;
  std::vector<std::int64_t> indices;

  std::int64_t usable() const { return last - first + 1; }
  bool operator==(const SamplingPlan&) const = default;
};

inline std::int64_t trim_count(std::int64_t clip_n, double trim_fraction) {
  return static_cast<std::int64_t>(std::floor(trim_fraction * static_cast<double>(clip_n) + 1e-9));
}

/// Drops floor(trim * clip_n) frames at each end, then spreads N indices
/// uniformly over what is left with round-half-up. `fps` only feeds M.
inline SamplingPlan plan_samples(std::int64_t clip_n, std::int64_t n, double trim_fraction = 0.10,
                                 double fps = 0.0) {
  if (clip_n <= 0 || n <= 0) throw Error(ErrorCode::NonPositiveInput, "plan_samples: clip_n and N must be positive");
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5))
    throw Error(ErrorCode::InvalidArgument, "plan_samples: trim_fraction must be in [0, 0.5)");
  SamplingPlan p;
  p.n = n;
  p.fps = fps;
  p.clip_n = clip_n;
  p.trim_fraction = trim_fraction;
  const std::int64_t t = trim_count(clip_n, trim_fraction);
  p.first = t;
  p.last = clip_n - 1 - t;
  if (p.usable() < n)
    throw Error(ErrorCode::InsufficientFrames, "plan_samples: " + std::to_string(p.usable()) +
                                                   " frames left after trimming, need " + std::to_string(n));
  if (fps > 0.0) {
    p.m = motion_intensity(n, fps, clip_n);
    p.m_trimmed = motion_intensity(n, fps, p.usable());
  }
  const std::int64_t span = p.last - p.first;
  p.indices.resize(static_cast<std::size_t>(n));
  if (n == 1) {
    p.indices[0] = p.first + (span + 1) / 2;
    return p;
  }
  for (std::int64_t k = 0; k < n; ++k) {
    // first + floor(k * span / (n - 1) + 1/2) in exact integer arithmetic
    std::int64_t idx = p.first + (2 * k * span + (n - 1)) / (2 * (n - 1));
    if (k > 0 && idx <= p.indices[static_cast<std::size_t>(k - 1)]) idx = p.indices[static_cast<std::size_t>(k - 1)] + 1;
    p.indices[static_cast<std::size_t>(k)] = idx;
  }
  return p;
}

/// Consecutive-stride sampling of a sub-clip starting `offset` frames into
/// the same trimmed window: the sampler adaptive equalization replaces.
inline std::vector<std::int64_t> fixed_stride_samples(std::int64_t clip_n, std::int64_t n, std::int64_t stride,
                                                      std::int64_t offset = 0, double trim_fraction = 0.10) {
  if (clip_n <= 0 || n <= 0 || stride <= 0)
    throw Error(ErrorCode::NonPositiveInput, "fixed_stride_samples: clip_n, N and stride must be positive");
  const std::int64_t t = trim_count(clip_n, trim_fraction);
  const std::int64_t first = t, last = clip_n - 1 - t;
  const std::int64_t need = (n - 1) * stride + 1;
  if (last - first + 1 < need)
    throw Error(ErrorCode::InsufficientFrames, "fixed_stride_samples: sub-clip does not fit the trimmed window");
  const std::int64_t max_offset = (last - first + 1) - need;
  const std::int64_t start = first + std::clamp<std::int64_t>(offset, 0, max_offset);
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = start + k * stride;
  return out;
}

}  // namespace clipcurate
