#include <gtest/gtest.h>

#include <random>

#include "clipcurate/segmenter.hpp"
#include "clipcurate/synth.hpp"
#include "segment_oracle.hpp"
#include "support.hpp"

using namespace clipcurate;

namespace {

MotionTrace trace_of(std::vector<double> mags, std::vector<double> luma = {}) {
  MotionTrace t;
  t.source_id = "src";
  t.fps = {1, 1};
  for (std::size_t i = 0; i < mags.size(); ++i) {
    PairStat p;
    p.mean_magnitude = mags[i];
    p.p95_magnitude = mags[i];
    p.mean_luma = luma.empty() ? 100.0 : luma[i];
    t.pair_stats.push_back(p);
  }
  return t;
}

// Renders frames on demand; satisfies FrameSource.
struct RenderedFrames {
  synth::Renderer renderer;
  int next_index = 0;
  std::optional<FrameBuffer> next() {
    if (next_index >= renderer.scene().frames) return std::nullopt;
    return renderer.luma_frame(next_index++);
  }
};

std::vector<oracle::Span> as_oracle(const std::vector<ClipSpan>& spans) {
  std::vector<oracle::Span> out;
  for (const auto& s : spans) out.push_back({s.start_frame, s.end_frame});
  return out;
}

}  // namespace

TEST(DetectCuts, FlowAboveUpperBound) {
  SegmenterConfig cfg;
  cfg.theta_cut = 20;
  EXPECT_EQ(detect_cuts(trace_of({2, 2, 45, 2, 2}), cfg), (std::vector<std::int64_t>{2}));
}

TEST(DetectCuts, NothingBelowBound) {
  EXPECT_TRUE(detect_cuts(trace_of({2, 3, 4, 19.9}), SegmenterConfig{}).empty());
}

TEST(DetectCuts, LumaJumpAtLowFlow) {
  SegmenterConfig cfg;
  cfg.luma_jump_max = 40;
  auto cuts = detect_cuts(trace_of({0.1, 0.1, 0.1, 0.1, 0.1}, {100, 100, 180, 180, 180}), cfg);
  EXPECT_EQ(cuts, (std::vector<std::int64_t>{1}));
}

TEST(DetectCuts, P95Statistic) {
  auto t = trace_of({2, 2, 2});
  t.pair_stats[1].p95_magnitude = 30;
  SegmenterConfig cfg;
  EXPECT_TRUE(detect_cuts(t, cfg).empty());
  cfg.statistic = CutStatistic::P95;
  EXPECT_EQ(detect_cuts(t, cfg), (std::vector<std::int64_t>{1}));
}

TEST(ExtractSpans, SingleRunOverGate) {
  const std::vector<double> mags = {0.2, 0.3, 2.5, 2.8, 3.0, 2.6, 0.1};
  auto spans = extract_spans(mags, {}, 1.0, PairLimits{3, 1000}, "src");
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0], (ClipSpan{"src", 2, 6}));
}

TEST(ExtractSpans, StaticVideoYieldsNothing) {
  const std::vector<double> mags(50, 0.0);
  EXPECT_TRUE(extract_spans(mags, {}, 1.0, PairLimits{3, 1000}).empty());
}

TEST(ExtractSpans, CutSplitsRunBelowMinimum) {
  SegmenterConfig cfg;
  cfg.theta_cut = 20;
  auto t = trace_of({2, 2, 45, 2, 2});
  const std::vector<double> mags = {2, 2, 45, 2, 2};
  EXPECT_TRUE(extract_spans(mags, detect_cuts(t, cfg), 1.0, PairLimits{3, 1000}).empty());
  // without the minimum both halves survive, and neither touches the cut
  auto spans = extract_spans(mags, detect_cuts(t, cfg), 1.0, PairLimits{2, 1000});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].end_frame, 2);
  EXPECT_EQ(spans[1].start_frame, 3);
}

TEST(ExtractSpans, GreedySplitLeavesBoundaryPair) {
  const std::vector<double> mags(10, 5.0);
  auto spans = extract_spans(mags, {}, 1.0, PairLimits{2, 4});
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (ClipSpan{"", 0, 4}));
  EXPECT_EQ(spans[1], (ClipSpan{"", 5, 9}));
  // tail shorter than the minimum is dropped
  auto strict = extract_spans(std::vector<double>(12, 5.0), {}, 1.0, PairLimits{3, 4});
  ASSERT_EQ(strict.size(), 2u);
  EXPECT_EQ(strict[1], (ClipSpan{"", 5, 9}));
}

TEST(ExtractSpans, SecondsToPairs) {
  SegmenterConfig cfg;
  auto lim = pair_limits(cfg, 30.0);
  EXPECT_EQ(lim.min_pairs, 89);   // 90 frames
  EXPECT_EQ(lim.max_pairs, 479);  // 480 frames
  auto ntsc = pair_limits(cfg, 30000.0 / 1001.0);
  EXPECT_EQ(ntsc.min_pairs, 89);   // ceil(89.91) = 90 frames
  EXPECT_EQ(ntsc.max_pairs, 478);  // floor(479.52) = 479 frames
}

TEST(ExtractSpans, TraceOverloadUsesFps) {
  SegmenterConfig cfg;
  cfg.min_len_s = 3;
  cfg.max_len_s = 5;
  auto t = trace_of(std::vector<double>(12, 2.0));  // 1 fps: min 2 pairs, max 4 pairs
  auto spans = extract_spans(t, cfg);
  ASSERT_EQ(spans.size(), 3u);
  for (const auto& s : spans) {
    EXPECT_GE(s.frame_count(), 3);
    EXPECT_LE(s.frame_count(), 5);
    EXPECT_EQ(s.source_id, "src");
  }
}

TEST(ExtractSpans, MatchesExhaustiveScanner) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> mag(0.0, 30.0);
  std::uniform_real_distribution<double> luma_step(-60.0, 60.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<double> mags(n), luma(n);
    double l = 128;
    for (std::size_t i = 0; i < n; ++i) {
      mags[i] = (rng() % 4 == 0) ? mag(rng) : mag(rng) / 10.0;
      l = std::clamp(l + ((rng() % 8 == 0) ? luma_step(rng) : luma_step(rng) / 10.0), 0.0, 255.0);
      luma[i] = l;
    }
    const double theta_motion = 0.2 + (rng() % 100) / 40.0;
    SegmenterConfig cfg;
    cfg.theta_motion = theta_motion;
    cfg.theta_cut = theta_motion + 1.0 + (rng() % 200) / 10.0;
    const PairLimits lim{static_cast<std::int64_t>(1 + rng() % 6), static_cast<std::int64_t>(1 + rng() % 12)};
    auto t = trace_of(mags, luma);
    const auto cuts = detect_cuts(t, cfg);
    ASSERT_EQ(cuts, oracle::brute_cuts(mags, luma, cfg.theta_cut, cfg.luma_jump_max));
    const auto got = as_oracle(extract_spans(mags, cuts, theta_motion, lim));
    const auto want = oracle::brute_spans(mags, cuts, theta_motion, lim.min_pairs, lim.max_pairs);
    ASSERT_EQ(got, want) << "trial " << trial;
  }
}

TEST(ExtractSpans, InvariantsOnRandomTraces) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> mag(0.0, 6.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> mags(5 + rng() % 80);
    for (auto& m : mags) m = mag(rng);
    std::vector<std::int64_t> cuts;
    for (std::size_t i = 0; i < mags.size(); ++i)
      if (rng() % 15 == 0) cuts.push_back(static_cast<std::int64_t>(i));
    const PairLimits lim{2, 7};
    const double theta = 1.0 + (rng() % 30) / 10.0;
    auto spans = extract_spans(mags, cuts, theta, lim);
    for (std::size_t k = 0; k < spans.size(); ++k) {
      const auto& s = spans[k];
      EXPECT_GT(s.end_frame, s.start_frame);
      if (k > 0) EXPECT_GT(s.start_frame, spans[k - 1].end_frame);  // no overlap
      for (auto p = s.start_frame; p < s.end_frame; ++p) {
        EXPECT_GE(mags[static_cast<std::size_t>(p)], theta);
        EXPECT_EQ(std::count(cuts.begin(), cuts.end(), p), 0);
      }
    }
    // raising the gate never retains more pairs, as long as no run needs splitting
    const PairLimits unsplit{lim.min_pairs, static_cast<std::int64_t>(mags.size())};
    auto total = [](const std::vector<ClipSpan>& v) {
      std::int64_t t = 0;
      for (const auto& s : v) t += s.end_frame - s.start_frame;
      return t;
    };
    EXPECT_LE(total(extract_spans(mags, cuts, theta + 0.5, unsplit)),
              total(extract_spans(mags, cuts, theta, unsplit)));
  }
}

TEST(ExtractSpans, SplittingCanBreakGateMonotonicity) {
  // one 9-pair run splits into 7 + 2 (tail dropped at min 3); raising the gate
  // at the middle pair leaves two 4-pair runs that are both kept
  std::vector<double> mags(9, 2.0);
  const PairLimits lim{3, 7};
  EXPECT_EQ(extract_spans(mags, {}, 1.0, lim).size(), 1u);
  mags[4] = 1.2;
  EXPECT_EQ(extract_spans(mags, {}, 1.5, lim).size(), 2u);
}

TEST(SegmenterConfig, Validation) {
  SegmenterConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.theta_motion = 25;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.min_len_s = 20;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(BuildTrace, TwoFramesGiveOnePair) {
  synth::Scene s;
  s.frames = 2;
  RenderedFrames src{synth::Renderer(s)};
  auto t = build_trace(src, FlowConfig{}, "two", s.fps);
  EXPECT_EQ(t.pair_stats.size(), 1u);
  EXPECT_EQ(t.frame_count(), 2);
}

TEST(BuildTrace, SingleFrameIsTooFew) {
  synth::Scene s;
  s.frames = 1;
  RenderedFrames src{synth::Renderer(s)};
  try {
    build_trace(src, FlowConfig{}, "one", s.fps);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewFrames);
  }
}

TEST(BuildTrace, ConstantShiftFromDecodedFile) {
  testsupport::TempDir dir;
  synth::Scene s;
  s.width = 128;
  s.height = 72;
  s.frames = 300;
  s.velocity = {3.0, 0.0};
  const auto path = testsupport::write_scene(dir, "pan.y4m", s);
  auto stream = open_stream(probe(path), 72);
  std::int64_t observed = 0;
  auto t = build_trace(stream, FlowConfig{}, [&](std::int64_t i, const FlowField& f, const FrameBuffer& a,
                                                 const FrameBuffer& b) {
    EXPECT_EQ(i, observed++);
    EXPECT_EQ(b.index, a.index + 1);
    EXPECT_FALSE(f.points.empty());
  });
  ASSERT_EQ(t.pair_stats.size(), 299u);
  EXPECT_EQ(observed, 299);
  EXPECT_EQ(t.source_id, path);
  for (const auto& p : t.pair_stats) EXPECT_NEAR(p.mean_magnitude, 3.0, 0.5);
}
