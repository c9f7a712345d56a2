#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "clipcurate/media.hpp"
#include "clipcurate/synth.hpp"
#include "support.hpp"

using namespace clipcurate;
using testsupport::TempDir;

namespace {

synth::Scene small_scene(int frames, int w = 96, int h = 64) {
  synth::Scene s;
  s.motion = synth::Motion::Pan;
  s.width = w;
  s.height = h;
  s.frames = frames;
  s.fps = {30, 1};
  s.velocity = {1.0, 0.0};
  return s;
}

// Independent frame counter: walks the Y4M byte layout directly.
std::int64_t count_y4m_frames(const std::string& path, std::size_t payload) {
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  std::int64_t n = 0;
  std::string marker;
  while (std::getline(in, marker)) {
    if (marker.rfind("FRAME", 0) != 0) break;
    in.seekg(static_cast<std::streamoff>(payload), std::ios::cur);
    if (!in) break;
    ++n;
  }
  return n;
}

}  // namespace

TEST(Luma, Bt601IntegerWeights) {
  EXPECT_EQ(luma_bt601(255, 255, 255), 255);
  EXPECT_EQ(luma_bt601(0, 0, 0), 0);
  EXPECT_EQ(luma_bt601(255, 0, 0), 76);
  EXPECT_EQ(luma_bt601(0, 255, 0), 150);  // 149.685 rounds up
  EXPECT_EQ(luma_bt601(0, 0, 255), 29);   // 29.07
}

TEST(Resample, AspectPreservingEvenWidth) {
  EXPECT_EQ(scaled_size(1920, 1080, 270), (std::pair<int, int>{480, 270}));
  EXPECT_EQ(scaled_size(854, 480, 270), (std::pair<int, int>{480, 270}));
  auto [w, h] = scaled_size(1001, 500, 100);
  EXPECT_EQ(w % 2, 0);
  EXPECT_EQ(h, 100);
}

TEST(Resample, AreaAverageOfTwoByTwoBlocks) {
  const std::vector<std::uint8_t> src = {0, 10, 20, 30,   //
                                         2, 12, 22, 32,   //
                                         100, 100, 7, 8,  //
                                         100, 101, 9, 9};
  auto out = area_resample(src, 4, 4, 1, 2, 2);
  // (0+10+2+12)/4=6, (20+30+22+32)/4=26, 401/4=100.25, 33/4=8.25
  EXPECT_EQ(out, (std::vector<std::uint8_t>{6, 26, 100, 8}));
}

TEST(Resample, FractionalCoveragePreservesConstant) {
  std::vector<std::uint8_t> src(7 * 5, 77);
  auto out = area_resample(src, 7, 5, 1, 4, 3);
  for (auto v : out) EXPECT_EQ(v, 77);
}

TEST(Probe, CountsFramesExactly) {
  TempDir dir;
  auto s = small_scene(300);
  const auto path = testsupport::write_scene(dir, "ten_seconds.y4m", s);
  const auto meta = probe(path);
  EXPECT_EQ(meta.frame_count, count_y4m_frames(path, 3u * 96 * 64));
  EXPECT_EQ(meta.frame_count, 300);
  EXPECT_EQ(meta.fps, (Rational{30, 1}));
  EXPECT_DOUBLE_EQ(meta.fps.value(), 30.0);
  EXPECT_EQ(meta.width, 96);
  EXPECT_EQ(meta.height, 64);
  EXPECT_NEAR(meta.duration_s, 10.0, 1e-12);
  EXPECT_LE(std::abs(meta.duration_s - meta.frame_count / meta.fps.value()), 1.0 / meta.fps.value());
}

TEST(Probe, SingleFrame) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "one.y4m", small_scene(1));
  const auto meta = probe(path);
  EXPECT_EQ(meta.frame_count, 1);
  EXPECT_NEAR(meta.duration_s, 1.0 / 30.0, 1e-12);
}

TEST(Probe, TextFileIsUndecodable) {
  TempDir dir;
  const auto path = dir.file("notes.txt");
  testsupport::write_text(path, "this is not a video\n");
  try {
    probe(path);
    FAIL() << "expected UndecodableStream";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndecodableStream);
  }
}

TEST(Probe, MissingFileIsUnreadable) {
  try {
    probe("/nonexistent/clip.y4m");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreadableSource);
  }
}

TEST(Probe, TrailingPartialFrameIsUnreadable) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(3));
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 100);
  try {
    probe(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreadableSource);
  }
}

TEST(Stream, YieldsEveryFrameInOrder) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(25));
  const auto meta = probe(path);
  auto stream = open_stream(meta, 64);
  std::int64_t expected = 0;
  while (auto f = stream.next()) {
    EXPECT_EQ(f->index, expected);
    EXPECT_NEAR(f->timestamp_s, expected / 30.0, 1e-6);
    EXPECT_EQ(f->luma.size(), static_cast<std::size_t>(f->width) * f->height);
    ++expected;
  }
  EXPECT_EQ(expected, meta.frame_count);
}

TEST(Stream, LumaMatchesBt601OfRenderedRgb) {
  TempDir dir;
  auto s = small_scene(2);
  const auto path = testsupport::write_scene(dir, "clip.y4m", s);
  auto stream = open_stream(probe(path), 64);
  synth::Renderer r(s);
  for (int t = 0; t < 2; ++t) {
    auto f = stream.next();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->luma, rgb_to_luma(r.rgb(t)));
  }
}

TEST(Stream, ColorRoundTripIsClose) {
  TempDir dir;
  auto s = small_scene(1);
  const auto path = testsupport::write_scene(dir, "clip.y4m", s);
  auto stream = open_stream(probe(path), 64);
  auto f = stream.next_color();
  ASSERT_TRUE(f);
  const auto ref = synth::Renderer(s).rgb(0);
  ASSERT_EQ(f->rgb.size(), ref.size());
  int worst = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(f->rgb[i] - ref[i]));
  EXPECT_LE(worst, 3);
}

TEST(Stream, DownscalesToTargetHeight) {
  TempDir dir;
  auto s = small_scene(1, 1920, 1080);
  const auto path = testsupport::write_scene(dir, "hd.y4m", s);
  auto stream = open_stream(probe(path), 270);
  auto f = stream.next();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->width, 480);
  EXPECT_EQ(f->height, 270);
  auto again = open_stream(probe(path), 270);
  EXPECT_EQ(again.width(), 480);
  EXPECT_EQ(again.height(), 270);
}

TEST(Stream, RejectsTinyTargetHeight) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(1));
  EXPECT_THROW(open_stream(probe(path), 32), Error);
}

TEST(Stream, DeterministicDecode) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(6, 200, 120));
  const auto meta = probe(path);
  auto a = open_stream(meta, 64);
  auto b = open_stream(meta, 64);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(a.next()->luma, b.next()->luma);
}

TEST(Stream, TruncationMidStreamIsAnError) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(10));
  const auto meta = probe(path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  auto stream = open_stream(meta, 64);
  int got = 0;
  try {
    while (stream.next()) ++got;
    FAIL() << "silent truncation after " << got << " frames";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreadableSource);
    EXPECT_LT(got, 10);
  }
}

TEST(Stream, SkipAdvancesIndex) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(5));
  auto stream = open_stream(probe(path), 64);
  EXPECT_TRUE(stream.skip());
  EXPECT_TRUE(stream.skip());
  auto f = stream.next_color();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->index, 2);
}

TEST(Y4m, LimitedRange420Mono) {
  TempDir dir;
  const auto path = dir.file("lim.y4m");
  {
    std::ofstream out(path, std::ios::binary);
    out << "YUV4MPEG2 W4 H2 F25:1 Ip C420mpeg2\nFRAME\n";
    const unsigned char y[8] = {16, 235, 126, 0, 16, 235, 126, 255};
    const unsigned char uv[4] = {128, 128, 128, 128};
    out.write(reinterpret_cast<const char*>(y), 8);
    out.write(reinterpret_cast<const char*>(uv), 4);
  }
  auto meta = probe(path);
  EXPECT_EQ(meta.fps, (Rational{25, 1}));
  auto stream = open_stream(meta, 64);
  EXPECT_EQ(stream.height(), 64);
  // Upscaled by area resampling: each output pixel replicates its source pixel.
  auto f = stream.next();
  ASSERT_TRUE(f);
  EXPECT_EQ(f->at(0, 0), 0);
  EXPECT_EQ(f->at(f->width - 1, f->height - 1), 255);
}

TEST(Subprocess, Y4mOverPipe) {
  TempDir dir;
  const auto path = testsupport::write_scene(dir, "clip.y4m", small_scene(7));
  // Disguise the file so the native reader does not pick it up.
  const auto hidden = dir.file("clip.bin");
  std::filesystem::copy_file(path, hidden);
  DecoderConfig cfg;
  cfg.command = "tail -c +1 {src}";
  const auto meta = probe(hidden, cfg);
  EXPECT_EQ(meta.frame_count, 7);
  auto piped = open_stream(meta, 64, cfg);
  auto direct = open_stream(probe(path), 64);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(piped.next()->luma, direct.next()->luma);
  EXPECT_FALSE(piped.next());
}

TEST(Subprocess, RawRgb24AndGray) {
  TempDir dir;
  auto s = small_scene(4);
  synth::Renderer r(s);
  const auto rgb_path = dir.file("clip.rgb");
  const auto gray_path = dir.file("clip.gray");
  {
    std::ofstream rgb(rgb_path, std::ios::binary), gray(gray_path, std::ios::binary);
    for (int t = 0; t < 4; ++t) {
      auto px = r.rgb(t);
      auto y = rgb_to_luma(px);
      rgb.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
      gray.write(reinterpret_cast<const char*>(y.data()), static_cast<std::streamsize>(y.size()));
    }
  }
  DecoderConfig cfg;
  cfg.command = "cat {src}";
  cfg.format = PipeFormat::RGB24;
  cfg.raw_width = 96;
  cfg.raw_height = 64;
  cfg.raw_fps = {24, 1};
  auto meta = probe(rgb_path, cfg);
  EXPECT_EQ(meta.frame_count, 4);
  EXPECT_EQ(meta.fps, (Rational{24, 1}));
  auto rs = open_stream(meta, 64, cfg);
  cfg.format = PipeFormat::Gray;
  auto gs = open_stream(probe(gray_path, cfg), 64, cfg);
  for (int t = 0; t < 4; ++t) {
    const auto a = rs.next();
    const auto b = gs.next();
    EXPECT_EQ(a->luma, rgb_to_luma(r.rgb(t)));
    EXPECT_EQ(a->luma, b->luma);
  }
}

TEST(Subprocess, SynthvidUri) {
  DecoderConfig cfg;
  cfg.command = std::string(CLIPCURATE_SYNTHVID) + " --uri {src}";
  const auto meta = probe("synth://pan?width=128&height=72&frames=12&vx=2", cfg);
  EXPECT_EQ(meta.frame_count, 12);
  EXPECT_EQ(meta.width, 128);
  EXPECT_EQ(meta.source_id, "synth://pan?width=128&height=72&frames=12&vx=2");
}

TEST(Subprocess, FailingDecoder) {
  DecoderConfig cfg;
  cfg.command = "false {src}";
  try {
    probe("anything", cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndecodableStream);
  }
}

TEST(SourceList, SkipsCommentsAndBlankLines) {
  std::istringstream in("# corpus\n/data/a.y4m\n\n   \n  /data/b c.y4m  \n#/data/skipped.y4m\nsynth://pan?seed=2\n");
  const auto list = read_source_list(in);
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0], "/data/a.y4m");
  EXPECT_EQ(list[1], "/data/b c.y4m");
  EXPECT_EQ(list[2], "synth://pan?seed=2");
}
