#pragma once

// Line-delimited JSON manifest: one canonical record per clip, kept or not,
// plus the corpus statistics computed over the kept ones.

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/caption.hpp"
#include "clipcurate/error.hpp"
#include "clipcurate/hashing.hpp"
#include "clipcurate/mag_sampler.hpp"
#include "clipcurate/quality.hpp"
#include "clipcurate/segmenter.hpp"

namespace clipcurate {

inline constexpr int kManifestSchemaVersion = 1;

/// 128-bit content hash of the source id and the inclusive frame range.
inline std::string make_clip_id(const std::string& source_id, std::int64_t start_frame, std::int64_t end_frame) {
  return fnv1a128_hex(source_id + '\n' + std::to_string(start_frame) + ':' + std::to_string(end_frame));
}

inline std::string make_clip_id(const ClipSpan& span) {
  return make_clip_id(span.source_id, span.start_frame, span.end_frame);
}

struct ClipManifestRecord {
  int schema_version = kManifestSchemaVersion;
  std::string clip_id;
  std::string source_id;
  ClipSpan span;
  Rational fps{30, 1};
  double duration_s = 0.0;
  MotionLabel motion;
  ScoreRecord scores;
  std::optional<SamplingPlan> sampling_plan;  // absent for clips dropped before sampling
  std::optional<CaptionRecord> caption;
  std::vector<std::string> caption_flags;
  Decision decision;
  std::string pipeline_version;

  bool operator==(const ClipManifestRecord&) const = default;
};

inline double span_duration_s(const ClipSpan& span, Rational fps) {
  return static_cast<double>(span.frame_count()) * static_cast<double>(fps.den) / static_cast<double>(fps.num);
}

/// Throws ValidationError naming the first offending field.
inline void validate_record(const ClipManifestRecord& r) {
  auto require = [](bool ok, const char* field, const std::string& msg) {
    if (!ok) throw ValidationError(field, msg);
  };
  auto in_range = [](double x, double lo, double hi) { return std::isfinite(x) && x >= lo && x <= hi; };

  require(r.schema_version == kManifestSchemaVersion, "schema_version",
          "unsupported version " + std::to_string(r.schema_version));
  require(!r.source_id.empty(), "source_id", "empty");
  require(r.span.source_id == r.source_id, "span.source_id", "differs from source_id");
  require(r.span.start_frame >= 0, "span.start_frame", "negative");
  require(r.span.end_frame >= r.span.start_frame, "span.end_frame", "before start_frame");
  require(r.fps.num > 0, "fps.num", "must be positive");
  require(r.fps.den > 0, "fps.den", "must be positive");
  require(r.clip_id == make_clip_id(r.span), "clip_id", "does not match source_id and span");
  const double expected = span_duration_s(r.span, r.fps);
  require(std::isfinite(r.duration_s) && std::abs(r.duration_s - expected) <= 1e-6, "duration_s",
          "expected " + std::to_string(expected) + ", got " + std::to_string(r.duration_s));

  require(in_range(r.motion.confidence, 0.0, 1.0), "motion.confidence", "outside [0,1]");
  require(r.motion.provenance == "heuristic" || r.motion.provenance == "remote" || r.motion.provenance == "fallback",
          "motion.provenance", "unknown value '" + r.motion.provenance + "'");

  require(r.scores.clip_id == r.clip_id, "scores.clip_id", "differs from clip_id");
  require(in_range(r.scores.aesthetic, 0.0, 10.0), "scores.aesthetic", "outside [0,10]");
  require(in_range(r.scores.quality, 0.0, 10.0), "scores.quality", "outside [0,10]");

  require(r.decision.clip_id == r.clip_id, "decision.clip_id", "differs from clip_id");
  const bool keep_reason = r.decision.reason == Reason::Kept || r.decision.reason == Reason::KeptStatic;
  require(r.decision.keep == keep_reason, "decision.reason",
          std::string("reason '") + to_string(r.decision.reason) + "' contradicts keep flag");

  if (r.sampling_plan) {
    const auto& p = *r.sampling_plan;
    require(p.clip_n == r.span.frame_count(), "sampling_plan.clip_n", "differs from span length");
    require(p.n > 0, "sampling_plan.n", "must be positive");
    require(std::isfinite(p.trim_fraction) && p.trim_fraction >= 0.0 && p.trim_fraction < 0.5,
            "sampling_plan.trim_fraction", "outside [0,0.5)");
    require(p.first >= 0 && p.first <= p.last && p.last < p.clip_n, "sampling_plan.first",
            "window outside the clip");
    require(static_cast<std::int64_t>(p.indices.size()) == p.n, "sampling_plan.indices", "length differs from n");
    for (std::size_t i = 0; i < p.indices.size(); ++i) {
      require(p.indices[i] >= p.first && p.indices[i] <= p.last, "sampling_plan.indices", "index outside window");
      require(i == 0 || p.indices[i] > p.indices[i - 1], "sampling_plan.indices", "not strictly increasing");
    }
    require(std::isfinite(p.fps) && p.fps >= 0.0, "sampling_plan.fps", "negative");
    if (p.fps > 0.0) {
      require(std::abs(p.m - motion_intensity(p.n, p.fps, p.clip_n)) <= 1e-6, "sampling_plan.m",
              "inconsistent with n, fps and clip_n");
      require(std::abs(p.m_trimmed - motion_intensity(p.n, p.fps, p.usable())) <= 1e-6, "sampling_plan.m_trimmed",
              "inconsistent with n, fps and the trimmed window");
    }
  }

  if (r.caption) {
    const auto& c = *r.caption;
    require(c.clip_id == r.clip_id, "caption.clip_id", "differs from clip_id");
    require(c.word_count == word_count(c.text), "caption.word_count", "does not match text");
    require(c.attempts >= 1, "caption.attempts", "must be >= 1");
  }
  require(!r.pipeline_version.empty(), "pipeline_version", "empty");
}

namespace detail {

inline std::string fixed6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline double quantize6(double x) { return std::strtod(fixed6(x).c_str(), nullptr); }

// Appends JSON tokens in caller-defined order.
class LineWriter {
 public:
  void key(const char* k) {
    sep();
    out_ += '"';
    out_ += k;
    out_ += "\":";
    fresh_ = true;
  }
  void open(char c) {
    sep();
    out_ += c;
    fresh_ = true;
  }
  void close(char c) {
    out_ += c;
    fresh_ = false;
  }
  void str(const std::string& s, const char* field) {
    sep();
    try {
      out_ += nlohmann::json(s).dump();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(field, "not valid UTF-8");
    }
  }
  void num(double x) {
    sep();
    out_ += fixed6(x);
  }
  void integer(std::int64_t x) {
    sep();
    out_ += std::to_string(x);
  }
  void boolean(bool b) {
    sep();
    out_ += b ? "true" : "false";
  }
  void null() {
    sep();
    out_ += "null";
  }
  std::string take() { return std::move(out_); }

 private:
  void sep() {
    if (!fresh_) out_ += ',';
    fresh_ = false;
  }
  std::string out_;
  bool fresh_ = true;
};

}  // namespace detail

/// Rounds every float field to the 6 decimals it will be written with, so
/// that read(write(r)) == r holds exactly.
inline ClipManifestRecord canonicalize(ClipManifestRecord r) {
  using detail::quantize6;
  r.duration_s = quantize6(r.duration_s);
  r.motion.confidence = quantize6(r.motion.confidence);
  r.scores.aesthetic = quantize6(r.scores.aesthetic);
  r.scores.quality = quantize6(r.scores.quality);
  if (r.sampling_plan) {
    auto& p = *r.sampling_plan;
    p.fps = quantize6(p.fps);
    p.m = quantize6(p.m);
    p.m_trimmed = quantize6(p.m_trimmed);
    p.trim_fraction = quantize6(p.trim_fraction);
  }
  return r;
}

/// Validates and renders one record as a single JSON line (no newline).
inline std::string serialize_record(const ClipManifestRecord& r) {
  validate_record(r);
  detail::LineWriter w;
  w.open('{');
  w.key("schema_version"), w.integer(r.schema_version);
  w.key("clip_id"), w.str(r.clip_id, "clip_id");
  w.key("source_id"), w.str(r.source_id, "source_id");
  w.key("span"), w.open('{');
  w.key("start_frame"), w.integer(r.span.start_frame);
  w.key("end_frame"), w.integer(r.span.end_frame);
  w.close('}');
  w.key("fps"), w.open('{');
  w.key("num"), w.integer(r.fps.num);
  w.key("den"), w.integer(r.fps.den);
  w.close('}');
  w.key("duration_s"), w.num(r.duration_s);
  w.key("motion"), w.open('{');
  w.key("label"), w.str(to_string(r.motion.label), "motion.label");
  w.key("confidence"), w.num(r.motion.confidence);
  w.key("rule"), w.str(r.motion.rule, "motion.rule");
  w.key("provenance"), w.str(r.motion.provenance, "motion.provenance");
  w.close('}');
  w.key("scores"), w.open('{');
  w.key("aesthetic"), w.num(r.scores.aesthetic);
  w.key("quality"), w.num(r.scores.quality);
  w.key("provenance"), w.str(to_string(r.scores.provenance), "scores.provenance");
  w.close('}');
  w.key("sampling_plan");
  if (r.sampling_plan) {
    const auto& p = *r.sampling_plan;
    w.open('{');
    w.key("n"), w.integer(p.n);
    w.key("fps"), w.num(p.fps);
    w.key("clip_n"), w.integer(p.clip_n);
    w.key("m"), w.num(p.m);
    w.key("m_trimmed"), w.num(p.m_trimmed);
    w.key("trim_fraction"), w.num(p.trim_fraction);
    w.key("first"), w.integer(p.first);
    w.key("last"), w.integer(p.last);
    w.key("indices"), w.open('[');
    for (auto i : p.indices) w.integer(i);
    w.close(']');
    w.close('}');
  } else {
    w.null();
  }
  w.key("caption");
  if (r.caption) {
    const auto& c = *r.caption;
    w.open('{');
    w.key("text"), w.str(c.text, "caption.text");
    w.key("word_count"), w.integer(static_cast<std::int64_t>(c.word_count));
    w.key("camera_terms_found"), w.open('[');
    for (const auto& t : c.camera_terms_found) w.str(t, "caption.camera_terms_found");
    w.close(']');
    w.key("language_tag"), w.str(c.language_tag, "caption.language_tag");
    w.key("model_id"), w.str(c.model_id, "caption.model_id");
    w.key("attempts"), w.integer(c.attempts);
    w.close('}');
  } else {
    w.null();
  }
  w.key("caption_flags"), w.open('[');
  for (const auto& f : r.caption_flags) w.str(f, "caption_flags");
  w.close(']');
  w.key("decision"), w.open('{');
  w.key("keep"), w.boolean(r.decision.keep);
  w.key("reason"), w.str(to_string(r.decision.reason), "decision.reason");
  w.close('}');
  w.key("pipeline_version"), w.str(r.pipeline_version, "pipeline_version");
  w.close('}');
  return w.take();
}

namespace detail {

// Typed access into a parsed line; failures name the dotted field path.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {}

  FieldReader sub(const char* key) const { return FieldReader(at(key), join(key)); }
  const nlohmann::json& at(const char* key) const {
    if (!j_.is_object()) throw ValidationError(path_.empty() ? "<root>" : path_, "expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) throw ValidationError(join(key), "missing");
    return *it;
  }
  bool is_null(const char* key) const { return at(key).is_null(); }
  std::string str(const char* key) const {
    const auto& v = at(key);
    if (!v.is_string()) throw ValidationError(join(key), "expected a string");
    return v.get<std::string>();
  }
  double num(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number()) throw ValidationError(join(key), "expected a number");
    return v.get<double>();
  }
  std::int64_t integer(const char* key) const {
    const auto& v = at(key);
    if (!v.is_number_integer()) throw ValidationError(join(key), "expected an integer");
    return v.get<std::int64_t>();
  }
  bool boolean(const char* key) const {
    const auto& v = at(key);
    if (!v.is_boolean()) throw ValidationError(join(key), "expected a boolean");
    return v.get<bool>();
  }
  std::vector<std::string> strings(const char* key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ValidationError(join(key), "expected an array");
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string()) throw ValidationError(join(key), "expected strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  std::vector<std::int64_t> integers(const char* key) const {
    const auto& v = at(key);
    if (!v.is_array()) throw ValidationError(join(key), "expected an array");
    std::vector<std::int64_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ValidationError(join(key), "expected integers");
      out.push_back(e.get<std::int64_t>());
    }
    return out;
  }
  template <class F>
  auto convert(const char* key, F&& f) const {
    const std::string s = str(key);
    try {
      return f(s);
    } catch (const Error& e) {
      throw ValidationError(join(key), e.what());
    }
  }

 private:
  std::string join(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace detail

/// Parses and re-validates one manifest line. Throws ValidationError.
inline ClipManifestRecord parse_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("<root>", std::string("invalid JSON: ") + e.what());
  }
  detail::FieldReader root(j, "");
  ClipManifestRecord r;
  const auto version = root.integer("schema_version");
  if (version != kManifestSchemaVersion)
    throw ValidationError("schema_version", "unsupported version " + std::to_string(version));
  r.schema_version = static_cast<int>(version);
  r.clip_id = root.str("clip_id");
  r.source_id = root.str("source_id");
  const auto span = root.sub("span");
  r.span = {r.source_id, span.integer("start_frame"), span.integer("end_frame")};
  const auto fps = root.sub("fps");
  r.fps = {fps.integer("num"), fps.integer("den")};
  r.duration_s = root.num("duration_s");

  const auto motion = root.sub("motion");
  r.motion.label = motion.convert("label", motion_class_from_string);
  r.motion.confidence = motion.num("confidence");
  r.motion.rule = motion.str("rule");
  r.motion.provenance = motion.str("provenance");

  const auto scores = root.sub("scores");
  r.scores.clip_id = r.clip_id;
  r.scores.aesthetic = scores.num("aesthetic");
  r.scores.quality = scores.num("quality");
  r.scores.provenance = scores.convert("provenance", scorer_provenance_from_string);

  if (!root.is_null("sampling_plan")) {
    const auto sp = root.sub("sampling_plan");
    SamplingPlan p;
    p.n = sp.integer("n");
    p.fps = sp.num("fps");
    p.clip_n = sp.integer("clip_n");
    p.m = sp.num("m");
    p.m_trimmed = sp.num("m_trimmed");
    p.trim_fraction = sp.num("trim_fraction");
    p.first = sp.integer("first");
    p.last = sp.integer("last");
    p.indices = sp.integers("indices");
    r.sampling_plan = std::move(p);
  }
  if (!root.is_null("caption")) {
    const auto cap = root.sub("caption");
    CaptionRecord c;
    c.clip_id = r.clip_id;
    c.text = cap.str("text");
    const auto wc = cap.integer("word_count");
    if (wc < 0) throw ValidationError("caption.word_count", "negative");
    c.word_count = static_cast<std::size_t>(wc);
    c.camera_terms_found = cap.strings("camera_terms_found");
    c.language_tag = cap.str("language_tag");
    c.model_id = cap.str("model_id");
    c.attempts = static_cast<int>(cap.integer("attempts"));
    r.caption = std::move(c);
  }
  r.caption_flags = root.strings("caption_flags");
  const auto decision = root.sub("decision");
  r.decision.clip_id = r.clip_id;
  r.decision.keep = decision.boolean("keep");
  r.decision.reason = decision.convert("reason", reason_from_string);
  r.pipeline_version = root.str("pipeline_version");
  validate_record(r);
  return r;
}

/// Append-only manifest file. Each record goes out in one write(2) on an
/// O_APPEND descriptor, so concurrent appenders never interleave lines.
class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::IOFailure, "cannot open manifest '" + path + "': " + std::strerror(errno));
  }
  ~ManifestWriter() {
    if (fd_ >= 0) ::close(fd_);
  }
  ManifestWriter(const ManifestWriter&) = delete;
  ManifestWriter& operator=(const ManifestWriter&) = delete;

  void append(const ClipManifestRecord& r) { append_line(serialize_record(r)); }

  /// `line` must be a serialized record without the trailing newline.
  void append_line(std::string line) {
    line += '\n';
    std::lock_guard lock(mu_);
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      const ssize_t n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == ENOSPC || errno == EDQUOT)
          throw Error(ErrorCode::SinkFull, "manifest '" + path_ + "': " + std::strerror(errno));
        throw Error(ErrorCode::IOFailure, "manifest '" + path_ + "': " + std::strerror(errno));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  void sync() {
    std::lock_guard lock(mu_);
    if (::fsync(fd_) != 0) throw Error(ErrorCode::IOFailure, "fsync '" + path_ + "': " + std::strerror(errno));
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  int fd_ = -1;
  std::mutex mu_;
};

/// All records are validated before the first byte is written.
inline std::size_t write_records(std::span<const ClipManifestRecord> records, ManifestWriter& sink) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(serialize_record(r));
  for (auto& l : lines) sink.append_line(std::move(l));
  return lines.size();
}

inline std::size_t write_records(std::span<const ClipManifestRecord> records, std::ostream& sink) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(serialize_record(r));
  for (const auto& l : lines) sink << l << '\n';
  sink.flush();
  if (!sink) throw Error(ErrorCode::IOFailure, "manifest stream write failed");
  return lines.size();
}

struct ReadWarning {
  std::size_t line_no = 0;
  std::string message;
};

struct ReadResult {
  std::vector<ClipManifestRecord> records;
  std::vector<ReadWarning> warnings;
};

/// Blank lines are skipped. A bad line aborts with MalformedLine when
/// `strict`, otherwise it is skipped with a warning.
inline ReadResult read_records(std::istream& in, bool strict = true) {
  ReadResult out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.records.push_back(parse_record(line));
    } catch (const ValidationError& e) {
      if (strict) throw MalformedLine(line_no, e.what());
      out.warnings.push_back({line_no, e.what()});
    }
  }
  if (in.bad()) throw Error(ErrorCode::IOFailure, "manifest read failed");
  return out;
}

inline ReadResult read_records(const std::string& path, bool strict = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open manifest '" + path + "'");
  return read_records(in, strict);
}

/// Drops bytes after the last newline (a line cut short by a crash).
/// Returns the number of bytes removed.
inline std::uintmax_t truncate_partial_tail(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return 0;
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::IOFailure, "cannot open manifest '" + path + "'");
  const auto size = static_cast<std::int64_t>(in.tellg());
  std::int64_t keep = size;
  constexpr std::int64_t kChunk = 4096;
  std::vector<char> buf(kChunk);
  while (keep > 0) {
    const std::int64_t from = std::max<std::int64_t>(0, keep - kChunk);
    in.seekg(from);
    in.read(buf.data(), keep - from);
    std::int64_t i = keep - from - 1;
    while (i >= 0 && buf[static_cast<std::size_t>(i)] != '\n') --i;
    if (i >= 0) {
      keep = from + i + 1;
      break;
    }
    keep = from;
  }
  in.close();
  if (keep == size) return 0;
  std::filesystem::resize_file(path, static_cast<std::uintmax_t>(keep), ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot truncate manifest '" + path + "': " + ec.message());
  return static_cast<std::uintmax_t>(size - keep);
}

struct DatasetStats {
  std::int64_t kept_clips = 0;
  std::int64_t dropped_clips = 0;
  double total_duration_s = 0.0;
  double total_duration_hr = 0.0;
  double avg_duration_s = 0.0;
  std::int64_t captioned_clips = 0;
  double avg_caption_words = 0.0;  // over kept clips that carry a caption
  std::array<std::int64_t, 6> label_histogram{};  // C1..C6, kept clips

  nlohmann::json to_json() const {
    nlohmann::json labels = nlohmann::json::object();
    for (int c = 1; c <= 6; ++c) labels[to_string(static_cast<MotionClass>(c))] = label_histogram[c - 1];
    return {{"kept_clips", kept_clips},
            {"dropped_clips", dropped_clips},
            {"total_duration_s", total_duration_s},
            {"total_duration_hr", total_duration_hr},
            {"avg_duration_s", avg_duration_s},
            {"captioned_clips", captioned_clips},
            {"avg_caption_words", avg_caption_words},
            {"label_histogram", labels}};
  }
};

inline DatasetStats compute_stats(std::span<const ClipManifestRecord> records) {
  DatasetStats s;
  double words = 0.0;
  for (const auto& r : records) {
    if (!r.decision.keep) {
      ++s.dropped_clips;
      continue;
    }
    ++s.kept_clips;
    s.total_duration_s += r.duration_s;
    ++s.label_histogram[static_cast<int>(r.motion.label) - 1];
    if (r.caption) {
      ++s.captioned_clips;
      words += static_cast<double>(r.caption->word_count);
    }
  }
  s.total_duration_hr = s.total_duration_s / 3600.0;
  if (s.kept_clips > 0) s.avg_duration_s = s.total_duration_s / static_cast<double>(s.kept_clips);
  if (s.captioned_clips > 0) s.avg_caption_words = words / static_cast<double>(s.captioned_clips);
  return s;
}

}  // namespace clipcurate
