#pragma once

// Source decoding: probing, frame streaming and the grayscale analysis planes
// every later stage consumes. Frames arrive from a local Y4M file or from a
// decoder subprocess that writes Y4M / raw RGB24 / raw gray to stdout.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <sys/wait.h>

#include "clipcurate/error.hpp"

namespace clipcurate {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

struct VideoMeta {
  std::string source_id;
  std::string path_or_uri;
  Rational fps;
  int width = 0;
  int height = 0;
  std::int64_t frame_count = 0;
  double duration_s = 0.0;
};

/// One analysis frame: downscaled 8-bit luma, row-major.
struct FrameBuffer {
  std::int64_t index = 0;
  double timestamp_s = 0.0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> luma;

  std::uint8_t at(int x, int y) const {
    return luma[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)];
  }
};

/// Downscaled interleaved RGB24 frame, used by scorers and captioners.
struct ColorFrame {
  std::int64_t index = 0;
  double timestamp_s = 0.0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;
};

enum class PipeFormat { Y4M, RGB24, Gray };

struct DecoderConfig {
  // Shell command with a `{src}` placeholder; empty disables the subprocess
  // backend. Example: "ffmpeg -v error -i {src} -f yuv4mpegpipe -pix_fmt yuv444p -"
  std::string command;
  PipeFormat format = PipeFormat::Y4M;
  // Frame geometry for headerless raw formats.
  int raw_width = 0;
  int raw_height = 0;
  Rational raw_fps{30, 1};
};

// ITU-R BT.601 luma, integer weights, round half up.
constexpr std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return static_cast<std::uint8_t>((299U * r + 587U * g + 114U * b + 500U) / 1000U);
}

inline std::vector<std::uint8_t> rgb_to_luma(std::span<const std::uint8_t> rgb) {
  std::vector<std::uint8_t> out(rgb.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = luma_bt601(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  return out;
}

/// Output size for an aspect-preserving scale to `target_height`; width rounds to even.
inline std::pair<int, int> scaled_size(int width, int height, int target_height) {
  const double w = static_cast<double>(width) * target_height / height;
  int even = static_cast<int>(std::lround(w / 2.0)) * 2;
  return {std::max(even, 2), target_height};
}

namespace detail {

struct Tap {
  int src;
  double weight;
};

// Box-filter coverage of each output cell over the input axis.
inline std::vector<std::vector<Tap>> area_taps(int in, int out) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    auto& t = taps[static_cast<std::size_t>(o)];
    for (int s = static_cast<int>(std::floor(lo)); s < in && s < hi; ++s) {
      const double overlap = std::min<double>(s + 1, hi) - std::max<double>(s, lo);
      if (overlap > 1e-12) t.push_back({s, overlap / scale});
    }
  }
  return taps;
}

}  // namespace detail

/// Area-averaging resample of an interleaved 8-bit image with `channels` planes.
inline std::vector<std::uint8_t> area_resample(std::span<const std::uint8_t> src, int width,
                                               int height, int channels, int out_width,
                                               int out_height) {
  if (width == out_width && height == out_height)
    return {src.begin(), src.end()};
  const auto xt = detail::area_taps(width, out_width);
  const auto yt = detail::area_taps(height, out_height);
  const auto c = static_cast<std::size_t>(channels);
  std::vector<double> rows(static_cast<std::size_t>(height) * out_width * c, 0.0);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* in = src.data() + static_cast<std::size_t>(y) * width * c;
    double* row = rows.data() + static_cast<std::size_t>(y) * out_width * c;
    for (int x = 0; x < out_width; ++x)
      for (const auto& tap : xt[static_cast<std::size_t>(x)])
        for (std::size_t k = 0; k < c; ++k)
          row[x * c + k] += tap.weight * in[tap.src * c + k];
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(out_height) * out_width * c);
  std::vector<double> acc(static_cast<std::size_t>(out_width) * c);
  for (int y = 0; y < out_height; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& tap : yt[static_cast<std::size_t>(y)]) {
      const double* row = rows.data() + static_cast<std::size_t>(tap.src) * out_width * c;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += tap.weight * row[i];
    }
    std::uint8_t* dst = out.data() + static_cast<std::size_t>(y) * out_width * c;
    for (std::size_t i = 0; i < acc.size(); ++i)
      dst[i] = static_cast<std::uint8_t>(std::clamp(std::floor(acc[i] + 0.5), 0.0, 255.0));
  }
  return out;
}

namespace detail {

// Sequential byte source over a FILE* opened with fopen() or popen().
class ByteSource {
 public:
  static std::unique_ptr<ByteSource> open_file(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw Error(ErrorCode::UnreadableSource, "cannot open " + path);
    return std::unique_ptr<ByteSource>(new ByteSource(f, false, path));
  }

  static std::unique_ptr<ByteSource> open_command(const std::string& command) {
    FILE* f = ::popen(command.c_str(), "r");
    if (!f) throw Error(ErrorCode::UnreadableSource, "cannot spawn: " + command);
    return std::unique_ptr<ByteSource>(new ByteSource(f, true, command));
  }

  ByteSource(const ByteSource&) = delete;
  ByteSource& operator=(const ByteSource&) = delete;
  ~ByteSource() { close(); }

  std::size_t read(void* dst, std::size_t n) {
    std::size_t got = std::fread(dst, 1, n, file_);
    if (got < n && std::ferror(file_))
      throw Error(ErrorCode::UnreadableSource, "read error on " + label_);
    return got;
  }

  // Skips n bytes; returns the number actually skipped.
  std::size_t skip(std::size_t n) {
    if (!pipe_) {
      const long pos = std::ftell(file_);
      std::fseek(file_, 0, SEEK_END);
      const long end = std::ftell(file_);
      const auto avail = static_cast<std::size_t>(std::max(0L, end - pos));
      const std::size_t step = std::min(n, avail);
      std::fseek(file_, pos + static_cast<long>(step), SEEK_SET);
      return step;
    }
    std::array<char, 1 << 16> scratch{};
    std::size_t done = 0;
    while (done < n) {
      const std::size_t got = read(scratch.data(), std::min(scratch.size(), n - done));
      if (got == 0) break;
      done += got;
    }
    return done;
  }

  int getc() { return std::fgetc(file_); }

  /// Reaps a subprocess and throws if it exited with failure. Files always succeed.
  void finish() {
    if (!pipe_ || !file_) return;
    const int status = ::pclose(file_);
    file_ = nullptr;
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
      throw Error(ErrorCode::UnreadableSource, "decoder exited with failure: " + label_);
  }

  const std::string& label() const { return label_; }

 private:
  ByteSource(FILE* f, bool pipe, std::string label)
      : file_(f), pipe_(pipe), label_(std::move(label)) {}

  void close() {
    if (!file_) return;
    if (pipe_) ::pclose(file_);
    else std::fclose(file_);
    file_ = nullptr;
  }

  FILE* file_ = nullptr;
  bool pipe_ = false;
  std::string label_;
};

enum class Chroma { C420, C422, C444, Mono, RGB24, Gray };

struct NativeHeader {
  int width = 0;
  int height = 0;
  Rational fps{30, 1};
  Chroma chroma = Chroma::C420;
  bool full_range = false;
};

inline std::size_t frame_bytes(const NativeHeader& h) {
  const auto w = static_cast<std::size_t>(h.width);
  const auto hh = static_cast<std::size_t>(h.height);
  const std::size_t cw = (w + 1) / 2;
  const std::size_t ch = (hh + 1) / 2;
  switch (h.chroma) {
    case Chroma::C420: return w * hh + 2 * cw * ch;
    case Chroma::C422: return w * hh + 2 * cw * hh;
    case Chroma::C444: return 3 * w * hh;
    case Chroma::Mono: return w * hh;
    case Chroma::RGB24: return 3 * w * hh;
    case Chroma::Gray: return w * hh;
  }
  return 0;
}

inline Rational parse_ratio(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error(ErrorCode::UndecodableStream, "bad ratio");
  Rational r{std::stoll(std::string(text.substr(0, colon))),
             std::stoll(std::string(text.substr(colon + 1)))};
  if (r.num <= 0 || r.den <= 0) throw Error(ErrorCode::UndecodableStream, "non-positive rate");
  return r;
}

inline NativeHeader parse_y4m_header(const std::string& line) {
  std::istringstream in(line);
  std::string tok;
  in >> tok;
  if (tok != "YUV4MPEG2") throw Error(ErrorCode::UndecodableStream, "missing YUV4MPEG2 magic");
  NativeHeader h;
  std::string colorspace = "420jpeg";
  while (in >> tok) {
    const char key = tok[0];
    const std::string val = tok.substr(1);
    try {
      switch (key) {
        case 'W': h.width = std::stoi(val); break;
        case 'H': h.height = std::stoi(val); break;
        case 'F': h.fps = parse_ratio(val); break;
        case 'C': colorspace = val; break;
        case 'I':
          if (val != "p" && val != "?")
            throw Error(ErrorCode::UndecodableStream, "interlaced input unsupported");
          break;
        case 'X':
          if (val == "COLORRANGE=FULL") h.full_range = true;
          break;
        default: break;
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::UndecodableStream, "bad header token " + tok);
    }
  }
  if (colorspace.rfind("420", 0) == 0) h.chroma = Chroma::C420;
  else if (colorspace == "422") h.chroma = Chroma::C422;
  else if (colorspace == "444") h.chroma = Chroma::C444;
  else if (colorspace == "mono") h.chroma = Chroma::Mono;
  else throw Error(ErrorCode::UndecodableStream, "unsupported colorspace C" + colorspace);
  if (h.width <= 0 || h.height <= 0)
    throw Error(ErrorCode::UndecodableStream, "missing frame dimensions");
  return h;
}

// Full-range luma from a Y sample.
inline std::uint8_t expand_luma(std::uint8_t y, bool full_range) {
  if (full_range) return y;
  if (y <= 16) return 0;
  if (y >= 235) return 255;
  return static_cast<std::uint8_t>(((y - 16) * 510 + 219) / 438);
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

/// Reads native frames one at a time from a ByteSource.
class NativeReader {
 public:
  NativeReader(std::unique_ptr<ByteSource> src, NativeHeader header, bool y4m)
      : src_(std::move(src)), header_(header), y4m_(y4m), payload_(frame_bytes(header)) {}

  static std::unique_ptr<NativeReader> open_y4m(std::unique_ptr<ByteSource> src) {
    std::string line;
    for (int ch; (ch = src->getc()) != EOF && ch != '\n';) {
      line.push_back(static_cast<char>(ch));
      if (line.size() > 4096) break;
    }
    if (line.rfind("YUV4MPEG2", 0) != 0)
      throw Error(ErrorCode::UndecodableStream, "not a Y4M stream: " + src->label());
    auto header = parse_y4m_header(line);
    return std::make_unique<NativeReader>(std::move(src), header, true);
  }

  const NativeHeader& header() const { return header_; }

  // Loads the next frame payload; false on clean end of stream.
  bool next(std::vector<std::uint8_t>& payload) { return advance(&payload); }
  bool skip() { return advance(nullptr); }

  void finish() { src_->finish(); }

  std::vector<std::uint8_t> to_luma(std::span<const std::uint8_t> payload) const {
    const std::size_t n = static_cast<std::size_t>(header_.width) * header_.height;
    if (header_.chroma == Chroma::RGB24) return rgb_to_luma(payload.first(3 * n));
    std::vector<std::uint8_t> out(payload.begin(), payload.begin() + static_cast<long>(n));
    if (header_.chroma != Chroma::Gray)
      for (auto& y : out) y = expand_luma(y, header_.full_range);
    return out;
  }

  std::vector<std::uint8_t> to_rgb(std::span<const std::uint8_t> payload) const {
    const int w = header_.width;
    const int h = header_.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (header_.chroma == Chroma::RGB24) return {payload.begin(), payload.begin() + 3 * n};
    std::vector<std::uint8_t> rgb(3 * n);
    if (header_.chroma == Chroma::Gray || header_.chroma == Chroma::Mono) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto y = header_.chroma == Chroma::Gray ? payload[i]
                                                      : expand_luma(payload[i], header_.full_range);
        rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = y;
      }
      return rgb;
    }
    int cw = w, ch = h;
    if (header_.chroma == Chroma::C420) { cw = (w + 1) / 2; ch = (h + 1) / 2; }
    if (header_.chroma == Chroma::C422) { cw = (w + 1) / 2; }
    const std::uint8_t* yp = payload.data();
    const std::uint8_t* up = yp + n;
    const std::uint8_t* vp = up + static_cast<std::size_t>(cw) * ch;
    const bool full = header_.full_range;
    for (int y = 0; y < h; ++y) {
      const int cy = (ch == h) ? y : y / 2;
      for (int x = 0; x < w; ++x) {
        const int cx = (cw == w) ? x : x / 2;
        const std::size_t ci = static_cast<std::size_t>(cy) * cw + cx;
        double Y = yp[static_cast<std::size_t>(y) * w + x];
        double U = up[ci] - 128.0;
        double V = vp[ci] - 128.0;
        if (!full) {
          Y = (Y - 16.0) * 255.0 / 219.0;
          U *= 255.0 / 224.0;
          V *= 255.0 / 224.0;
        }
        std::uint8_t* px = rgb.data() + 3 * (static_cast<std::size_t>(y) * w + x);
        px[0] = clamp_u8(Y + 1.402 * V);
        px[1] = clamp_u8(Y - 0.344136 * U - 0.714136 * V);
        px[2] = clamp_u8(Y + 1.772 * U);
      }
    }
    return rgb;
  }

 private:
  bool advance(std::vector<std::uint8_t>* payload) {
    if (y4m_) {
      std::string tag;
      int ch = src_->getc();
      if (ch == EOF) return false;
      for (; ch != EOF && ch != '\n'; ch = src_->getc()) {
        if (tag.size() < 5) tag.push_back(static_cast<char>(ch));
      }
      if (tag != "FRAME")
        throw Error(ErrorCode::UnreadableSource, "corrupt frame marker in " + src_->label());
      if (ch == EOF) throw Error(ErrorCode::UnreadableSource, "truncated frame in " + src_->label());
    }
    std::size_t got;
    if (payload) {
      payload->resize(payload_);
      got = src_->read(payload->data(), payload_);
    } else {
      got = src_->skip(payload_);
    }
    if (got == 0 && !y4m_) return false;
    if (got != payload_)
      throw Error(ErrorCode::UnreadableSource,
                  "truncated frame (" + std::to_string(got) + " of " + std::to_string(payload_) +
                      " bytes) in " + src_->label());
    return true;
  }

  std::unique_ptr<ByteSource> src_;
  NativeHeader header_;
  bool y4m_;
  std::size_t payload_;
};

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  return out + "'";
}

inline std::string expand_command(const std::string& tmpl, const std::string& source) {
  std::string cmd = tmpl;
  const std::string quoted = shell_quote(source);
  for (std::size_t pos; (pos = cmd.find("{src}")) != std::string::npos;)
    cmd.replace(pos, 5, quoted);
  return cmd;
}

inline bool has_y4m_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[9] = {};
  in.read(magic, 9);
  return in.gcount() == 9 && std::string_view(magic, 9) == "YUV4MPEG2";
}

inline std::unique_ptr<NativeReader> open_reader(const std::string& source,
                                                 const DecoderConfig& cfg) {
  std::error_code ec;
  const bool is_file = std::filesystem::is_regular_file(source, ec);
  if (is_file && has_y4m_magic(source))
    return NativeReader::open_y4m(ByteSource::open_file(source));
  if (cfg.command.empty()) {
    if (!is_file) throw Error(ErrorCode::UnreadableSource, "no such file: " + source);
    std::ifstream probe(source, std::ios::binary);
    if (!probe) throw Error(ErrorCode::UnreadableSource, "cannot open " + source);
    throw Error(ErrorCode::UndecodableStream, "no video track recognised in " + source);
  }
  auto src = ByteSource::open_command(expand_command(cfg.command, source));
  if (cfg.format == PipeFormat::Y4M) {
    try {
      return NativeReader::open_y4m(std::move(src));
    } catch (const Error&) {
      throw Error(ErrorCode::UndecodableStream, "decoder produced no Y4M stream for " + source);
    }
  }
  if (cfg.raw_width <= 0 || cfg.raw_height <= 0 || cfg.raw_fps.num <= 0 || cfg.raw_fps.den <= 0)
    throw Error(ErrorCode::InvalidConfig, "raw pipe formats need raw_width/raw_height/raw_fps");
  NativeHeader h;
  h.width = cfg.raw_width;
  h.height = cfg.raw_height;
  h.fps = cfg.raw_fps;
  h.chroma = cfg.format == PipeFormat::RGB24 ? Chroma::RGB24 : Chroma::Gray;
  h.full_range = true;
  return std::make_unique<NativeReader>(std::move(src), h, false);
}

}  // namespace detail

/// Reads the whole stream once to establish the exact frame count.
inline VideoMeta probe(const std::string& source, const DecoderConfig& cfg = {}) {
  auto reader = detail::open_reader(source, cfg);
  std::int64_t count = 0;
  while (reader->skip()) ++count;
  reader->finish();
  if (count == 0) throw Error(ErrorCode::UndecodableStream, "no frames in " + source);
  const auto& h = reader->header();
  VideoMeta meta;
  meta.source_id = source;
  meta.path_or_uri = source;
  meta.fps = h.fps;
  meta.width = h.width;
  meta.height = h.height;
  meta.frame_count = count;
  meta.duration_s = static_cast<double>(count) * h.fps.den / static_cast<double>(h.fps.num);
  return meta;
}

/// Sequential decoder over one source; frames come out downscaled to the
/// analysis height. Ending before `frame_count` frames is reported as an error.
class FrameStream {
 public:
  FrameStream(VideoMeta meta, int target_height, DecoderConfig cfg = {})
      : meta_(std::move(meta)) {
    if (target_height < 64)
      throw Error(ErrorCode::InvalidArgument, "target_height must be >= 64");
    reader_ = detail::open_reader(meta_.path_or_uri, cfg);
    const auto& h = reader_->header();
    if (h.width != meta_.width || h.height != meta_.height)
      throw Error(ErrorCode::UnreadableSource, "stream geometry changed since probe");
    std::tie(width_, height_) = scaled_size(h.width, h.height, target_height);
  }

  const VideoMeta& meta() const { return meta_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t position() const { return next_index_; }

  std::optional<FrameBuffer> next() {
    if (!load()) return std::nullopt;
    FrameBuffer f;
    stamp(f);
    auto full = reader_->to_luma(payload_);
    f.luma = area_resample(full, meta_.width, meta_.height, 1, width_, height_);
    return f;
  }

  std::optional<ColorFrame> next_color() {
    if (!load()) return std::nullopt;
    ColorFrame f;
    stamp(f);
    auto full = reader_->to_rgb(payload_);
    f.rgb = area_resample(full, meta_.width, meta_.height, 3, width_, height_);
    return f;
  }

  bool skip() {
    if (!check_more()) return false;
    if (!reader_->skip()) fail_truncated();
    ++next_index_;
    return true;
  }

 private:
  template <class F>
  void stamp(F& f) {
    f.index = next_index_++;
    f.timestamp_s = static_cast<double>(f.index) * meta_.fps.den / static_cast<double>(meta_.fps.num);
    f.width = width_;
    f.height = height_;
  }

  bool check_more() { return next_index_ < meta_.frame_count; }

  bool load() {
    if (!check_more()) return false;
    if (!reader_->next(payload_)) fail_truncated();
    return true;
  }

  [[noreturn]] void fail_truncated() const {
    throw Error(ErrorCode::UnreadableSource,
                "stream ended after " + std::to_string(next_index_) + " of " +
                    std::to_string(meta_.frame_count) + " frames: " + meta_.path_or_uri);
  }

  VideoMeta meta_;
  std::unique_ptr<detail::NativeReader> reader_;
  std::vector<std::uint8_t> payload_;
  int width_ = 0;
  int height_ = 0;
  std::int64_t next_index_ = 0;
};

inline FrameStream open_stream(const VideoMeta& meta, int target_height,
                               const DecoderConfig& cfg = {}) {
  return FrameStream(meta, target_height, cfg);
}

/// Source list: one path or URI per line; blank lines and `#` comment lines ignored.
inline std::vector<std::string> read_source_list(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

inline std::vector<std::string> read_source_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableSource, "cannot open source list " + path);
  return read_source_list(in);
}

}  // namespace clipcurate
