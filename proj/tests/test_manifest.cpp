#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "clipcurate/manifest.hpp"
#include "manifest_fixtures.hpp"
#include "support.hpp"

using namespace clipcurate;

namespace {

std::vector<std::string> lines_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ClipManifestRecord random_record(std::mt19937_64& rng, int i) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rational fps = (i % 3 == 0) ? Rational{30000, 1001} : Rational{static_cast<std::int64_t>(24 + rng() % 37), 1};
  const std::int64_t start = static_cast<std::int64_t>(rng() % 5000);
  const std::int64_t len = 20 + static_cast<std::int64_t>(rng() % 400);
  auto r = fixtures::record("src-" + std::to_string(rng() % 7) + "/\xc3\xa9t\xc3\xa9 \"q\".y4m", start,
                            start + len - 1, fps, rng() % 2 == 0, static_cast<MotionClass>(1 + rng() % 6));
  r.motion.confidence = u(rng);
  r.scores.aesthetic = 10.0 * u(rng);
  r.scores.quality = 10.0 * u(rng);
  r.scores.provenance = rng() % 2 ? ScorerProvenance::External : ScorerProvenance::BuiltinProxy;
  if (!r.decision.keep) r.decision.reason = static_cast<Reason>(2 + rng() % 5);
  if (rng() % 2) fixtures::attach_caption(r, 1 + rng() % 300);
  if (rng() % 4 == 0) r.caption_flags = {"too_short"};
  return canonicalize(r);
}

}  // namespace

TEST(Manifest, ClipIdIsContentHash) {
  EXPECT_EQ(make_clip_id("a.y4m", 0, 99), make_clip_id("a.y4m", 0, 99));
  EXPECT_NE(make_clip_id("a.y4m", 0, 99), make_clip_id("a.y4m", 0, 98));
  EXPECT_NE(make_clip_id("a.y4m", 1, 99), make_clip_id("a.y4m1", 1, 99));
  EXPECT_EQ(make_clip_id("a.y4m", 0, 99).size(), 32u);
}

TEST(Manifest, ClipIdsCollisionFreeOnFixtureSpans) {
  std::set<std::string> ids;
  std::size_t n = 0;
  for (int s = 0; s < 5; ++s)
    for (std::int64_t a = 0; a < 120; ++a)
      for (std::int64_t b = a; b < 120; ++b, ++n) ids.insert(make_clip_id("fixture_" + std::to_string(s), a, b));
  EXPECT_EQ(ids.size(), n);
}

TEST(Manifest, CanonicalLineLayout) {
  auto r = fixtures::record("src", 0, 99);
  const std::string expected =
      R"({"schema_version":1,"clip_id":")" + r.clip_id +
      R"(","source_id":"src","span":{"start_frame":0,"end_frame":99},"fps":{"num":30,"den":1},)"
      R"("duration_s":3.333333,"motion":{"label":"C4","confidence":0.750000,"rule":"linear","provenance":"heuristic"},)"
      R"("scores":{"aesthetic":6.500000,"quality":7.250000,"provenance":"builtin_proxy"},)"
      R"("sampling_plan":{"n":8,"fps":30.000000,"clip_n":100,"m":2.400000,"m_trimmed":3.000000,)"
      R"("trim_fraction":0.100000,"first":10,"last":89,"indices":[10,21,33,44,55,66,78,89]},)"
      R"("caption":null,"caption_flags":[],"decision":{"keep":true,"reason":"kept"},"pipeline_version":"test"})";
  EXPECT_EQ(serialize_record(r), expected);
}

TEST(Manifest, WritesOneParseableLinePerRecord) {
  testsupport::TempDir dir;
  const auto path = dir.file("m.jsonl");
  const std::vector<ClipManifestRecord> recs{fixtures::record("a", 0, 99), fixtures::record("a", 120, 300),
                                             fixtures::record("b", 5, 200, {25, 1}, false)};
  ManifestWriter w(path);
  EXPECT_EQ(write_records(recs, w), 3u);
  const auto lines = lines_of(path);
  ASSERT_EQ(lines.size(), 3u);
  for (const auto& l : lines) EXPECT_NO_THROW((void)nlohmann::json::parse(l));
}

TEST(Manifest, DurationViolationRejectedBeforeWrite) {
  testsupport::TempDir dir;
  const auto path = dir.file("m.jsonl");
  std::vector<ClipManifestRecord> recs{fixtures::record("a", 0, 99), fixtures::record("a", 100, 199)};
  recs[1].duration_s += 0.01;
  ManifestWriter w(path);
  try {
    write_records(recs, w);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "duration_s");
    EXPECT_EQ(e.code(), ErrorCode::ValidationError);
  }
  EXPECT_EQ(slurp(path), "");
}

TEST(Manifest, FieldPathsInErrors) {
  auto check = [](auto mutate, const std::string& field) {
    auto r = fixtures::record("a", 0, 99);
    fixtures::attach_caption(r, 100);
    mutate(r);
    try {
      validate_record(r);
      ADD_FAILURE() << "no error for " << field;
    } catch (const ValidationError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  check([](auto& r) { r.scores.aesthetic = 11; }, "scores.aesthetic");
  check([](auto& r) { r.clip_id = "0"; }, "clip_id");
  check([](auto& r) { r.decision.reason = Reason::LowQuality; }, "decision.reason");
  check([](auto& r) { r.sampling_plan->indices[3] = 2; }, "sampling_plan.indices");
  check([](auto& r) { r.sampling_plan->m = 9; }, "sampling_plan.m");
  check([](auto& r) { r.caption->word_count = 7; }, "caption.word_count");
  check([](auto& r) { r.motion.confidence = std::nan(""); }, "motion.confidence");
  check([](auto& r) { r.fps.num = 0; }, "fps.num");
  check([](auto& r) { r.pipeline_version.clear(); }, "pipeline_version");
}

TEST(Manifest, ByteIdenticalAcrossSinks) {
  std::mt19937_64 rng(3);
  std::vector<ClipManifestRecord> recs;
  for (int i = 0; i < 50; ++i) recs.push_back(random_record(rng, i));
  testsupport::TempDir dir;
  {
    ManifestWriter a(dir.file("a.jsonl")), b(dir.file("b.jsonl"));
    write_records(recs, a);
    write_records(recs, b);
  }
  std::ostringstream os;
  write_records(recs, os);
  EXPECT_EQ(slurp(dir.file("a.jsonl")), slurp(dir.file("b.jsonl")));
  EXPECT_EQ(slurp(dir.file("a.jsonl")), os.str());
}

TEST(Manifest, RoundTripEquality) {
  std::mt19937_64 rng(11);
  std::vector<ClipManifestRecord> recs;
  for (int i = 0; i < 500; ++i) recs.push_back(random_record(rng, i));
  std::stringstream ss;
  write_records(recs, ss);
  const auto back = read_records(ss);
  EXPECT_TRUE(back.warnings.empty());
  ASSERT_EQ(back.records.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(back.records[i], recs[i]) << i;
}

TEST(Manifest, CanonicalizeIsIdempotentThroughText) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto r = random_record(rng, i);
    r.scores.aesthetic = 10.0 * std::ldexp(static_cast<double>(rng() >> 11), -53);
    const auto line = serialize_record(r);
    EXPECT_EQ(serialize_record(parse_record(line)), line);
    EXPECT_EQ(parse_record(line), canonicalize(r));
  }
}

TEST(Manifest, CorruptedLineLenient) {
  std::vector<ClipManifestRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(fixtures::record("s", 100 * i, 100 * i + 90));
  std::ostringstream os;
  write_records(recs, os);
  std::string text = os.str();
  const auto third = text.find('\n', text.find('\n') + 1) + 1;
  text.replace(third + 10, 6, "@@@@@@");
  std::istringstream in(text);
  const auto res = read_records(in, false);
  EXPECT_EQ(res.records.size(), 4u);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_EQ(res.warnings[0].line_no, 3u);
}

TEST(Manifest, CorruptedLineStrict) {
  std::vector<ClipManifestRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(fixtures::record("s", 100 * i, 100 * i + 90));
  std::ostringstream os;
  write_records(recs, os);
  std::string text = os.str();
  // a structurally valid line whose duration breaks the invariant
  const std::string needle = "\"duration_s\":3.033333";
  const auto at = text.rfind(needle);
  ASSERT_NE(at, std::string::npos);
  text.replace(at, needle.size(), "\"duration_s\":4.033333");
  std::istringstream in(text);
  try {
    read_records(in, true);
    FAIL();
  } catch (const MalformedLine& e) {
    EXPECT_EQ(e.line_no(), 5u);
    EXPECT_NE(std::string(e.what()).find("duration_s"), std::string::npos);
  }
}

TEST(Manifest, TruncatesPartialTail) {
  testsupport::TempDir dir;
  const auto path = dir.file("m.jsonl");
  {
    ManifestWriter w(path);
    const std::vector<ClipManifestRecord> recs{fixtures::record("a", 0, 99), fixtures::record("a", 100, 199)};
    write_records(recs, w);
  }
  const auto whole = slurp(path);
  const std::string partial = R"({"schema_version":1,"clip_id":"ab)";
  {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    out << partial;
  }
  EXPECT_EQ(truncate_partial_tail(path), partial.size());
  EXPECT_EQ(slurp(path), whole);
  EXPECT_EQ(truncate_partial_tail(path), 0u);
  testsupport::write_text(path, "no newline at all");
  EXPECT_EQ(truncate_partial_tail(path), 17u);
  EXPECT_EQ(slurp(path), "");
  EXPECT_EQ(truncate_partial_tail(dir.file("missing.jsonl")), 0u);
}

TEST(Manifest, ConcurrentAppendsStayLineAtomic) {
  testsupport::TempDir dir;
  const auto path = dir.file("m.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] {
      ManifestWriter w(path);  // separate descriptors on the same file
      for (int i = 0; i < 100; ++i) {
        auto r = fixtures::record("thread" + std::to_string(t), 1000 * i, 1000 * i + 200 + t);
        fixtures::attach_caption(r, 400);
        w.append(r);
      }
    });
  for (auto& th : threads) th.join();
  const auto res = read_records(path, true);
  EXPECT_EQ(res.records.size(), 400u);
}

TEST(Manifest, UnwritableSink) {
  try {
    ManifestWriter w("/nonexistent-dir/m.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IOFailure);
  }
}

TEST(DatasetStats, AverageDuration) {
  // fps 1 makes the frame counts the durations
  const std::vector<ClipManifestRecord> recs{fixtures::record("a", 0, 4, {1, 1}), fixtures::record("a", 10, 16, {1, 1}),
                                             fixtures::record("a", 20, 29, {1, 1})};
  const auto s = compute_stats(recs);
  EXPECT_EQ(s.kept_clips, 3);
  EXPECT_NEAR(s.avg_duration_s, 22.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.avg_duration_s, 7.333333, 5e-7);
  EXPECT_NEAR(s.total_duration_hr, 22.0 / 3600.0, 1e-15);
}

TEST(DatasetStats, AverageCaptionWords) {
  std::vector<ClipManifestRecord> recs;
  for (std::size_t w : {100, 206, 312}) {
    recs.push_back(fixtures::record("a", static_cast<std::int64_t>(w) * 10, static_cast<std::int64_t>(w) * 10 + 99));
    fixtures::attach_caption(recs.back(), w);
  }
  EXPECT_DOUBLE_EQ(compute_stats(recs).avg_caption_words, 206.0);
}

TEST(DatasetStats, EmptyCorpus) {
  const auto s = compute_stats({});
  EXPECT_EQ(s.kept_clips, 0);
  EXPECT_EQ(s.avg_duration_s, 0.0);
  EXPECT_EQ(s.avg_caption_words, 0.0);
  EXPECT_EQ(s.total_duration_hr, 0.0);
  for (auto c : s.label_histogram) EXPECT_EQ(c, 0);
}

TEST(DatasetStats, KeptOnlyAndHistogramSums) {
  std::mt19937_64 rng(17);
  std::vector<ClipManifestRecord> recs;
  for (int i = 0; i < 300; ++i) recs.push_back(random_record(rng, i));
  const auto s = compute_stats(recs);
  std::int64_t kept = 0, hist = 0;
  double total = 0;
  for (const auto& r : recs)
    if (r.decision.keep) ++kept, total += r.duration_s;
  for (auto c : s.label_histogram) hist += c;
  EXPECT_EQ(s.kept_clips, kept);
  EXPECT_EQ(hist, kept);
  EXPECT_EQ(s.kept_clips + s.dropped_clips, 300);
  EXPECT_NEAR(s.avg_duration_s * static_cast<double>(s.kept_clips), total, 1e-9);
}

TEST(DatasetStats, DurationTotalsAreAdditive) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ClipManifestRecord> a, b;
    for (int i = 0, n = static_cast<int>(rng() % 40); i < n; ++i) a.push_back(random_record(rng, i));
    for (int i = 0, n = static_cast<int>(rng() % 40); i < n; ++i) b.push_back(random_record(rng, i));
    std::vector<ClipManifestRecord> both = a;
    both.insert(both.end(), b.begin(), b.end());
    const auto sa = compute_stats(a), sb = compute_stats(b), sab = compute_stats(both);
    EXPECT_NEAR(sab.total_duration_s, sa.total_duration_s + sb.total_duration_s, 1e-9);
    EXPECT_EQ(sab.kept_clips, sa.kept_clips + sb.kept_clips);
  }
}
