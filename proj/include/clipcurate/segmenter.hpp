#pragma once

// Turns a source video into candidate clips: per-pair motion trace, hard-cut
// detection, and extraction of contiguous camera-motion runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipcurate/error.hpp"
#include "clipcurate/flow.hpp"
#include "clipcurate/media.hpp"

namespace clipcurate {

struct PairStat {
  double mean_magnitude = 0.0;
  double p95_magnitude = 0.0;
  Vec2 mean_vector;
  double mean_luma = 0.0;       // average of both frames' mean luma
  double valid_fraction = 0.0;
  double fit_residual = std::numeric_limits<double>::quiet_NaN();  // set by camera_motion
};

struct MotionTrace {
  std::string source_id;
  Rational fps{30, 1};
  int frame_width = 0;
  int frame_height = 0;
  std::vector<PairStat> pair_stats;  // entry i describes frames (i, i+1)

  std::int64_t frame_count() const { return static_cast<std::int64_t>(pair_stats.size()) + 1; }
};

enum class CutStatistic { Mean, P95 };

struct SegmenterConfig {
  double theta_motion = 1.0;  // px per frame, lower gate for camera motion
  double theta_cut = 20.0;    // px per frame, above this a pair is a hard cut
  double luma_jump_max = 40.0;
  double min_len_s = 3.0;
  double max_len_s = 16.0;
  CutStatistic statistic = CutStatistic::Mean;

  void validate() const {
    if (!(theta_motion > 0.0 && theta_motion < theta_cut))
      throw Error(ErrorCode::InvalidConfig, "segmenter: require 0 < theta_motion < theta_cut");
    if (!(min_len_s > 0.0 && min_len_s < max_len_s))
      throw Error(ErrorCode::InvalidConfig, "segmenter: require 0 < min_len_s < max_len_s");
    if (!(luma_jump_max > 0.0))
      throw Error(ErrorCode::InvalidConfig, "segmenter: luma_jump_max must be > 0");
  }

  double magnitude(const PairStat& p) const {
    return statistic == CutStatistic::Mean ? p.mean_magnitude : p.p95_magnitude;
  }
};

/// Inclusive frame range of one clip inside its source.
struct ClipSpan {
  std::string source_id;
  std::int64_t start_frame = 0;
  std::int64_t end_frame = 0;

  std::int64_t frame_count() const { return end_frame - start_frame + 1; }
  bool operator==(const ClipSpan&) const = default;
};

inline double mean_luma(const FrameBuffer& f) {
  if (f.luma.empty()) return 0.0;
  std::uint64_t sum = 0;
  for (auto v : f.luma) sum += v;
  return static_cast<double>(sum) / static_cast<double>(f.luma.size());
}

/// Called once per adjacent pair with the flow field that produced its stats.
using PairObserver =
    std::function<void(std::int64_t pair, const FlowField&, const FrameBuffer&, const FrameBuffer&)>;

template <class Source>
concept FrameSource = requires(Source& s) {
  { s.next() } -> std::same_as<std::optional<FrameBuffer>>;
};

template <FrameSource Source>
MotionTrace build_trace(Source& frames, const FlowConfig& flow_cfg, std::string source_id,
                        Rational fps, const PairObserver& observer = {}) {
  flow_cfg.validate();
  MotionTrace trace;
  trace.source_id = std::move(source_id);
  trace.fps = fps;
  auto prev = frames.next();
  if (!prev) throw Error(ErrorCode::TooFewFrames, "stream yielded no frames");
  trace.frame_width = prev->width;
  trace.frame_height = prev->height;
  FlowPyramid prev_pyr(*prev, flow_cfg.pyramid_levels);
  double prev_luma = mean_luma(*prev);
  std::int64_t pair = 0;
  while (auto next = frames.next()) {
    FlowPyramid next_pyr(*next, flow_cfg.pyramid_levels);
    const FlowField field = estimate_flow(prev_pyr, next_pyr, flow_cfg);
    const FlowStats st = flow_stats(field);
    const double next_luma = mean_luma(*next);
    PairStat ps;
    ps.mean_magnitude = st.mean_magnitude;
    ps.p95_magnitude = st.p95_magnitude;
    ps.mean_vector = st.mean_vector;
    ps.valid_fraction = st.valid_fraction;
    ps.mean_luma = 0.5 * (prev_luma + next_luma);
    trace.pair_stats.push_back(ps);
    if (observer) observer(pair, field, *prev, *next);
    ++pair;
    prev = std::move(next);
    prev_pyr = std::move(next_pyr);
    prev_luma = next_luma;
  }
  if (trace.pair_stats.empty()) throw Error(ErrorCode::TooFewFrames, "need at least 2 frames");
  return trace;
}

inline MotionTrace build_trace(FrameStream& stream, const FlowConfig& flow_cfg,
                               const PairObserver& observer = {}) {
  return build_trace(stream, flow_cfg, stream.meta().source_id, stream.meta().fps, observer);
}

/// Pair indices that are hard cuts: flow above theta_cut, or a mean-luma step
/// to the next pair above luma_jump_max. Sorted ascending.
inline std::vector<std::int64_t> detect_cuts(const MotionTrace& trace, const SegmenterConfig& cfg) {
  std::vector<std::int64_t> cuts;
  const auto& ps = trace.pair_stats;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const bool flow_cut = cfg.magnitude(ps[i]) > cfg.theta_cut;
    const bool luma_cut =
        i + 1 < ps.size() && std::abs(ps[i + 1].mean_luma - ps[i].mean_luma) > cfg.luma_jump_max;
    if (flow_cut || luma_cut) cuts.push_back(static_cast<std::int64_t>(i));
  }
  return cuts;
}

/// Clip length limits expressed in pairs for a given frame rate. A clip of P
/// pairs has P + 1 frames and lasts (P + 1) / fps seconds.
struct PairLimits {
  std::int64_t min_pairs = 1;
  std::int64_t max_pairs = 1;
};

inline PairLimits pair_limits(const SegmenterConfig& cfg, double fps) {
  const auto min_frames = static_cast<std::int64_t>(std::ceil(cfg.min_len_s * fps - 1e-9));
  const auto max_frames = static_cast<std::int64_t>(std::floor(cfg.max_len_s * fps + 1e-9));
  return {std::max<std::int64_t>(1, min_frames - 1), std::max<std::int64_t>(1, max_frames - 1)};
}

/// Core run scanner over per-pair magnitudes. Runs are maximal stretches of
/// pairs with magnitude >= theta_motion that contain no cut; long runs are
/// split greedily into max_pairs pieces separated by one boundary pair.
inline std::vector<ClipSpan> extract_spans(std::span<const double> magnitudes,
                                           std::span<const std::int64_t> cuts,
                                           double theta_motion, PairLimits limits,
                                           const std::string& source_id = {}) {
  std::vector<std::uint8_t> is_cut(magnitudes.size(), 0);
  for (auto c : cuts)
    if (c >= 0 && static_cast<std::size_t>(c) < magnitudes.size()) is_cut[static_cast<std::size_t>(c)] = 1;

  std::vector<ClipSpan> spans;
  const auto n = static_cast<std::int64_t>(magnitudes.size());
  auto emit_run = [&](std::int64_t a, std::int64_t b) {
    for (std::int64_t start = a; start <= b;) {
      const std::int64_t end = std::min(b, start + limits.max_pairs - 1);
      if (end - start + 1 >= limits.min_pairs) spans.push_back({source_id, start, end + 1});
      start = end + 2;
    }
  };
  std::int64_t run_start = -1;
  for (std::int64_t i = 0; i < n; ++i) {
    const bool ok = !is_cut[static_cast<std::size_t>(i)] &&
                    magnitudes[static_cast<std::size_t>(i)] >= theta_motion;
    if (ok && run_start < 0) run_start = i;
    if (!ok && run_start >= 0) {
      emit_run(run_start, i - 1);
      run_start = -1;
    }
  }
  if (run_start >= 0) emit_run(run_start, n - 1);
  return spans;
}

inline std::vector<ClipSpan> extract_spans(const MotionTrace& trace, const SegmenterConfig& cfg) {
  cfg.validate();
  std::vector<double> mags(trace.pair_stats.size());
  std::transform(trace.pair_stats.begin(), trace.pair_stats.end(), mags.begin(),
                 [&](const PairStat& p) { return cfg.magnitude(p); });
  const auto cuts = detect_cuts(trace, cfg);
  return extract_spans(mags, cuts, cfg.theta_motion, pair_limits(cfg, trace.fps.value()),
                       trace.source_id);
}

}  // namespace clipcurate
