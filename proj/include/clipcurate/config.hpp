#pragma once

// Pipeline configuration: every module's settings with embedded defaults,
// loaded from a TOML file with one table per module.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/caption.hpp"
#include "clipcurate/error.hpp"
#include "clipcurate/flow.hpp"
#include "clipcurate/media.hpp"
#include "clipcurate/quality.hpp"
#include "clipcurate/segmenter.hpp"
#include "clipcurate/service.hpp"

namespace clipcurate {

inline constexpr const char* kPipelineVersion = "clipcurate-0.1.0";

// ---------------------------------------------------------------------------
// TOML subset: [table] headers (dotted names allowed), `key = value` with
// bare or quoted keys, strings (basic and literal), integers, floats,
// booleans and arrays of those (may span lines). No inline tables, no
// dotted keys, no dates.

struct TomlValue {
  enum class Kind { Bool, Int, Float, String, Array } kind = Kind::String;
  bool b = false;
  std::int64_t i = 0;
  double d = 0.0;
  std::string s;
  std::vector<TomlValue> arr;
  int line = 0;
};

struct TomlDocument {
  // table name ("" for the root) -> key -> value
  std::map<std::string, std::map<std::string, TomlValue>> tables;

  const TomlValue* find(const std::string& table, const std::string& key) const {
    auto t = tables.find(table);
    if (t == tables.end()) return nullptr;
    auto k = t->second.find(key);
    return k == t->second.end() ? nullptr : &k->second;
  }
};

namespace detail {

class TomlParser {
 public:
  explicit TomlParser(std::string text) : src_(std::move(text)) {}

  TomlDocument parse() {
    TomlDocument doc;
    std::string table;
    doc.tables[table];
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        skip_ws();
        std::string name = key();
        while (peek() == '.') {
          ++pos_;
          name += '.' + key();
        }
        skip_ws();
        expect(']');
        end_of_line();
        if (!declared_.insert(name).second) fail("table [" + name + "] defined twice");
        table = name;
        doc.tables[table];
        continue;
      }
      const int at = line_;
      const std::string k = key();
      skip_ws();
      expect('=');
      skip_ws();
      TomlValue v = value();
      v.line = at;
      end_of_line();
      if (!doc.tables[table].emplace(k, std::move(v)).second)
        fail("duplicate key '" + k + "'" + (table.empty() ? "" : " in [" + table + "]"));
    }
    return doc;
  }

 private:
  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return eof() ? '\0' : src_[pos_]; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_) + ": " + msg);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_ws() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  // whitespace, comments and newlines
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() != '\n') return;
      ++pos_;
      ++line_;
    }
  }

  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
    ++pos_;
    ++line_;
  }

  std::string key() {
    if (peek() == '"') return basic_string();
    if (peek() == '\'') return literal_string();
    std::string k;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') k += src_[pos_++];
    if (k.empty()) fail("expected a key");
    return k;
  }

  static void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = src_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated string");
      c = src_[pos_++];
      switch (c) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'u':
        case 'U': {
          const int len = c == 'u' ? 4 : 8;
          if (pos_ + static_cast<std::size_t>(len) > src_.size()) fail("short unicode escape");
          std::uint32_t cp = 0;
          for (int i = 0; i < len; ++i) {
            const char h = src_[pos_++];
            if (!std::isxdigit(static_cast<unsigned char>(h))) fail("bad unicode escape");
            cp = cp * 16 + static_cast<std::uint32_t>(std::isdigit(static_cast<unsigned char>(h))
                                                          ? h - '0'
                                                          : std::tolower(static_cast<unsigned char>(h)) - 'a' + 10);
          }
          if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail("invalid code point");
          append_utf8(out, cp);
          break;
        }
        default: fail(std::string("unknown escape \\") + c);
      }
    }
  }

  std::string literal_string() {
    expect('\'');
    const auto end = src_.find_first_of("'\n", pos_);
    if (end == std::string::npos || src_[end] != '\'') fail("unterminated string");
    std::string out = src_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  TomlValue value() {
    TomlValue v;
    const char c = peek();
    if (c == '"' || c == '\'') {
      v.kind = TomlValue::Kind::String;
      v.s = c == '"' ? basic_string() : literal_string();
      return v;
    }
    if (c == '[') {
      ++pos_;
      v.kind = TomlValue::Kind::Array;
      while (true) {
        skip_blank_lines();
        if (peek() == ']') {
          ++pos_;
          return v;
        }
        v.arr.push_back(value());
        if (v.arr.back().kind == TomlValue::Kind::Array) fail("nested arrays are not supported");
        skip_blank_lines();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        skip_blank_lines();
        expect(']');
        return v;
      }
    }
    std::string tok;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string_view("+-._").find(peek()) != std::string_view::npos))
      tok += src_[pos_++];
    if (tok.empty()) fail("expected a value");
    if (tok == "true" || tok == "false") {
      v.kind = TomlValue::Kind::Bool;
      v.b = tok == "true";
      return v;
    }
    std::string digits;
    for (std::size_t i = 0; i < tok.size(); ++i) {
      if (tok[i] != '_') {
        digits += tok[i];
        continue;
      }
      if (i == 0 || i + 1 == tok.size() || !std::isdigit(static_cast<unsigned char>(tok[i - 1])) ||
          !std::isdigit(static_cast<unsigned char>(tok[i + 1])))
        fail("misplaced '_' in number '" + tok + "'");
    }
    const std::string_view body = std::string_view(digits).substr(digits[0] == '+' || digits[0] == '-' ? 1 : 0);
    if (body == "inf" || body == "nan") {
      v.kind = TomlValue::Kind::Float;
      v.d = body == "inf" ? HUGE_VAL : std::nan("");
      if (digits[0] == '-') v.d = -v.d;
      return v;
    }
    const bool is_float = digits.find_first_of(".eE") != std::string::npos;
    errno = 0;
    char* end = nullptr;
    if (is_float) {
      v.kind = TomlValue::Kind::Float;
      v.d = std::strtod(digits.c_str(), &end);
    } else {
      v.kind = TomlValue::Kind::Int;
      v.i = std::strtoll(digits.c_str(), &end, 10);
    }
    if (end != digits.c_str() + digits.size() || errno == ERANGE || body.empty() ||
        !std::isdigit(static_cast<unsigned char>(body[0])))
      fail("invalid value '" + tok + "'");
    return v;
  }

  std::string src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::set<std::string> declared_;
};

}  // namespace detail

inline TomlDocument parse_toml(std::string text) { return detail::TomlParser(std::move(text)).parse(); }

// ---------------------------------------------------------------------------

enum class Stage { Segment, Classify, Score, Filter, Sample, Caption };

inline constexpr std::array<Stage, 6> kStageOrder{Stage::Segment, Stage::Classify, Stage::Score,
                                                   Stage::Filter,  Stage::Sample,   Stage::Caption};

inline const char* to_string(Stage s) {
  static constexpr const char* names[] = {"segment", "classify", "score", "filter", "sample", "caption"};
  return names[static_cast<int>(s)];
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : kStageOrder)
    if (s == to_string(st)) return st;
  throw Error(ErrorCode::InvalidConfig, "unknown stage '" + s + "'");
}

struct SamplerConfig {
  std::int64_t n = 49;
  double trim_fraction = 0.10;
};

struct PipelineConfig {
  // [pipeline]
  std::vector<std::string> sources;  // inline sources, processed before source_list entries
  std::string source_list;           // newline-delimited file of sources
  std::string manifest = "manifest.jsonl";
  int workers = 1;
  int queue_depth = 4;  // finished sources allowed to wait ahead of the writer
  std::vector<std::string> stages{"segment", "classify", "score", "filter", "sample"};
  std::string seed = "clipcurate";  // static-quota hash salt
  std::string pipeline_version = kPipelineVersion;
  int analysis_height = 270;

  DecoderConfig decoder;
  FlowConfig flow;
  SegmenterConfig segmenter;
  ClassifierConfig classifier;
  ServiceConfig classifier_service{.url = "", .timeout_s = 30.0, .attempts = 3, .backoff_s = 1.0,
                                   .backoff_factor = 4.0, .rps_limit = 0.0, .fallback = true};
  int classifier_frames = 16;
  ServiceConfig scorer_service{.url = "", .timeout_s = 30.0, .attempts = 3, .backoff_s = 1.0, .backoff_factor = 4.0,
                               .rps_limit = 0.0, .fallback = true};
  int score_frames = 4;
  FilterConfig filter;
  SamplerConfig sampler;
  CaptionConfig caption;
  std::string vocabulary_file;

  bool has_stage(Stage s) const {
    return std::find(stages.begin(), stages.end(), to_string(s)) != stages.end();
  }

  FilterConfig effective_filter() const {
    FilterConfig f = filter;
    f.quota_seed = seed;
    return f;
  }

  CaptionConfig effective_caption() const {
    CaptionConfig c = caption;
    if (!vocabulary_file.empty()) c.vocabulary = load_vocabulary(vocabulary_file);
    return c;
  }

  /// Stages must form a prefix of segment, classify, score, filter, sample, caption.
  void validate() const {
    if (workers < 1) throw Error(ErrorCode::InvalidConfig, "pipeline.workers must be >= 1");
    if (queue_depth < 1) throw Error(ErrorCode::InvalidConfig, "pipeline.queue_depth must be >= 1");
    if (analysis_height < 64) throw Error(ErrorCode::InvalidConfig, "pipeline.analysis_height must be >= 64");
    if (manifest.empty()) throw Error(ErrorCode::InvalidConfig, "pipeline.manifest is empty");
    if (pipeline_version.empty()) throw Error(ErrorCode::InvalidConfig, "pipeline.pipeline_version is empty");
    std::set<std::string> seen;
    for (const auto& s : stages) {
      stage_from_string(s);
      if (!seen.insert(s).second) throw Error(ErrorCode::InvalidConfig, "stage '" + s + "' listed twice");
    }
    if (stages.empty()) throw Error(ErrorCode::InvalidConfig, "pipeline.stages is empty");
    for (std::size_t i = 0; i < kStageOrder.size(); ++i) {
      if (has_stage(kStageOrder[i])) continue;
      for (std::size_t j = i + 1; j < kStageOrder.size(); ++j)
        if (has_stage(kStageOrder[j]))
          throw Error(ErrorCode::InvalidConfig, std::string("stage '") + to_string(kStageOrder[j]) +
                                                    "' requires stage '" + to_string(kStageOrder[i]) + "'");
    }
    if (!source_list.empty() && !std::filesystem::is_regular_file(source_list))
      throw Error(ErrorCode::InvalidConfig, "pipeline.source_list '" + source_list + "' does not exist");
    if (!vocabulary_file.empty() && !std::filesystem::is_regular_file(vocabulary_file))
      throw Error(ErrorCode::InvalidConfig, "caption.vocabulary_file '" + vocabulary_file + "' does not exist");
    flow.validate();
    segmenter.validate();
    classifier.validate();
    classifier_service.validate("classifier.service");
    if (classifier_frames < 2 || classifier_frames > 64)
      throw Error(ErrorCode::InvalidConfig, "classifier.frames must be in [2,64]");
    scorer_service.validate("scorer.service");
    if (score_frames < 1 || score_frames > 64) throw Error(ErrorCode::InvalidConfig, "scorer.frames must be in [1,64]");
    filter.validate();
    if (sampler.n < 1) throw Error(ErrorCode::InvalidConfig, "sampler.n must be >= 1");
    if (!(sampler.trim_fraction >= 0.0 && sampler.trim_fraction < 0.5))
      throw Error(ErrorCode::InvalidConfig, "sampler.trim_fraction must be in [0,0.5)");
    caption.validate();
    if (has_stage(Stage::Caption) && !caption.service.enabled())
      throw Error(ErrorCode::InvalidConfig, "stage 'caption' needs caption.service.url");
  }
};

template <class Svc, class Visitor>
void visit_service(Svc& s, const char* table, Visitor&& v) {
  v(table, "url", s.url);
  v(table, "timeout_s", s.timeout_s);
  v(table, "attempts", s.attempts);
  v(table, "backoff_s", s.backoff_s);
  v(table, "backoff_factor", s.backoff_factor);
  v(table, "rps_limit", s.rps_limit);
  v(table, "fallback", s.fallback);
}

/// Calls `v(table, key, field)` for every setting, in print order.
template <class Cfg, class Visitor>
void visit_config(Cfg& c, Visitor&& v) {
  v("pipeline", "sources", c.sources);
  v("pipeline", "source_list", c.source_list);
  v("pipeline", "manifest", c.manifest);
  v("pipeline", "workers", c.workers);
  v("pipeline", "queue_depth", c.queue_depth);
  v("pipeline", "stages", c.stages);
  v("pipeline", "seed", c.seed);
  v("pipeline", "pipeline_version", c.pipeline_version);
  v("pipeline", "analysis_height", c.analysis_height);

  v("decoder", "command", c.decoder.command);
  v("decoder", "format", c.decoder.format);
  v("decoder", "raw_width", c.decoder.raw_width);
  v("decoder", "raw_height", c.decoder.raw_height);
  v("decoder", "raw_fps", c.decoder.raw_fps);

  v("flow", "grid_spacing", c.flow.grid_spacing);
  v("flow", "pyramid_levels", c.flow.pyramid_levels);
  v("flow", "window", c.flow.window);
  v("flow", "max_iters", c.flow.max_iters);
  v("flow", "residual_max", c.flow.residual_max);
  v("flow", "min_eigen", c.flow.min_eigen);
  v("flow", "epsilon", c.flow.epsilon);

  v("segmenter", "theta_motion", c.segmenter.theta_motion);
  v("segmenter", "theta_cut", c.segmenter.theta_cut);
  v("segmenter", "luma_jump_max", c.segmenter.luma_jump_max);
  v("segmenter", "min_len_s", c.segmenter.min_len_s);
  v("segmenter", "max_len_s", c.segmenter.max_len_s);
  v("segmenter", "statistic", c.segmenter.statistic);

  v("classifier", "static_mag", c.classifier.static_mag);
  v("classifier", "static_rate", c.classifier.static_rate);
  v("classifier", "rot_rate", c.classifier.rot_rate);
  v("classifier", "parallax_inlier", c.classifier.parallax_inlier);
  v("classifier", "parallax_ratio", c.classifier.parallax_ratio);
  v("classifier", "residual_spike", c.classifier.residual_spike);
  v("classifier", "residual_floor", c.classifier.residual_floor);
  v("classifier", "edit_frac", c.classifier.edit_frac);
  v("classifier", "edit_valid_drop", c.classifier.edit_valid_drop);
  v("classifier", "luma_jump_max", c.classifier.luma_jump_max);
  v("classifier", "track_center_mag", c.classifier.track_center_mag);
  v("classifier", "track_border_mag", c.classifier.track_border_mag);
  v("classifier", "c2_min_crossings", c.classifier.c2_min_crossings);
  v("classifier", "c2_net_ratio", c.classifier.c2_net_ratio);
  v("classifier", "c2_deadband", c.classifier.c2_deadband);
  v("classifier", "frames", c.classifier_frames);
  visit_service(c.classifier_service, "classifier.service", v);

  v("scorer", "frames", c.score_frames);
  visit_service(c.scorer_service, "scorer.service", v);

  v("filter", "theta_aes", c.filter.theta_aes);
  v("filter", "theta_qual", c.filter.theta_qual);
  v("filter", "c5_quota", c.filter.c5_quota);

  v("sampler", "n", c.sampler.n);
  v("sampler", "trim_fraction", c.sampler.trim_fraction);

  v("caption", "template_id", c.caption.template_id);
  v("caption", "frames", c.caption.frames);
  v("caption", "min_words", c.caption.min_words);
  v("caption", "target_language", c.caption.target_language);
  v("caption", "vocabulary", c.caption.vocabulary);
  v("caption", "vocabulary_file", c.vocabulary_file);
  visit_service(c.caption.service, "caption.service", v);
}

namespace detail {

inline const char* pipe_format_name(PipeFormat f) {
  return f == PipeFormat::Y4M ? "y4m" : f == PipeFormat::RGB24 ? "rgb24" : "gray";
}

class ConfigAssigner {
 public:
  explicit ConfigAssigner(const TomlDocument& doc) : doc_(doc) {}

  template <class T>
  void operator()(const std::string& table, const std::string& key, T& field) {
    known_tables_.insert(table);
    const TomlValue* v = doc_.find(table, key);
    if (!v) return;
    used_.insert(table + "." + key);
    name_ = table + "." + key;
    line_ = v->line;
    assign(*v, field);
  }

  /// Rejects keys and tables nothing consumed.
  void check_unused() const {
    for (const auto& [table, keys] : doc_.tables) {
      if (!table.empty() && !known_tables_.count(table))
        throw Error(ErrorCode::InvalidConfig, "unknown table [" + table + "]");
      for (const auto& [key, v] : keys)
        if (!used_.count(table + "." + key))
          throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(v.line) + ": unknown key '" +
                                                    (table.empty() ? key : table + "." + key) + "'");
    }
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(line_) + ": " + name_ + " " + what);
  }

  void assign(const TomlValue& v, bool& f) {
    if (v.kind != TomlValue::Kind::Bool) fail("must be a boolean");
    f = v.b;
  }
  void assign(const TomlValue& v, std::int64_t& f) {
    if (v.kind != TomlValue::Kind::Int) fail("must be an integer");
    f = v.i;
  }
  void assign(const TomlValue& v, int& f) {
    std::int64_t x = 0;
    assign(v, x);
    if (x < INT32_MIN || x > INT32_MAX) fail("is out of range");
    f = static_cast<int>(x);
  }
  void assign(const TomlValue& v, std::size_t& f) {
    std::int64_t x = 0;
    assign(v, x);
    if (x < 0) fail("must be non-negative");
    f = static_cast<std::size_t>(x);
  }
  void assign(const TomlValue& v, double& f) {
    if (v.kind == TomlValue::Kind::Int) f = static_cast<double>(v.i);
    else if (v.kind == TomlValue::Kind::Float) f = v.d;
    else fail("must be a number");
  }
  void assign(const TomlValue& v, std::string& f) {
    if (v.kind != TomlValue::Kind::String) fail("must be a string");
    f = v.s;
  }
  void assign(const TomlValue& v, std::vector<std::string>& f) {
    if (v.kind != TomlValue::Kind::Array) fail("must be an array of strings");
    f.clear();
    for (const auto& e : v.arr) {
      if (e.kind != TomlValue::Kind::String) fail("must be an array of strings");
      f.push_back(e.s);
    }
  }
  void assign(const TomlValue& v, Rational& f) {
    if (v.kind == TomlValue::Kind::Int) {
      f = {v.i, 1};
    } else if (v.kind == TomlValue::Kind::String) {
      const auto slash = v.s.find('/');
      try {
        std::size_t used = 0;
        f.num = std::stoll(v.s.substr(0, slash), &used);
        if (used != std::min(slash, v.s.size())) fail("must look like \"30000/1001\"");
        f.den = slash == std::string::npos ? 1 : std::stoll(v.s.substr(slash + 1), &used);
        if (slash != std::string::npos && used != v.s.size() - slash - 1) fail("must look like \"30000/1001\"");
      } catch (const std::logic_error&) {
        fail("must look like \"30000/1001\"");
      }
    } else {
      fail("must be an integer or a \"num/den\" string");
    }
    if (f.num <= 0 || f.den <= 0) fail("must be positive");
  }
  void assign(const TomlValue& v, PipeFormat& f) {
    std::string s;
    assign(v, s);
    for (PipeFormat p : {PipeFormat::Y4M, PipeFormat::RGB24, PipeFormat::Gray})
      if (s == pipe_format_name(p)) {
        f = p;
        return;
      }
    fail("must be one of y4m, rgb24, gray");
  }
  void assign(const TomlValue& v, CutStatistic& f) {
    std::string s;
    assign(v, s);
    if (s == "mean") f = CutStatistic::Mean;
    else if (s == "p95") f = CutStatistic::P95;
    else fail("must be mean or p95");
  }

  const TomlDocument& doc_;
  std::set<std::string> known_tables_;
  std::set<std::string> used_;
  std::string name_;
  int line_ = 0;
};

inline std::string toml_quote(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

class ConfigPrinter {
 public:
  template <class T>
  void operator()(const std::string& table, const std::string& key, const T& field) {
    if (table != table_) {
      if (!table_.empty()) out_ << '\n';
      out_ << '[' << table << "]\n";
      table_ = table;
    }
    out_ << key << " = " << render(field) << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  static std::string render(bool b) { return b ? "true" : "false"; }
  static std::string render(int x) { return std::to_string(x); }
  static std::string render(std::int64_t x) { return std::to_string(x); }
  static std::string render(std::size_t x) { return std::to_string(x); }
  static std::string render(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    if (x == std::trunc(x) && std::abs(x) < 1e15) {
      std::snprintf(buf, sizeof buf, "%.1f", x);
      return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", x);
    std::string s(buf);
    // shortest form that reads back to the same double
    for (int prec = 1; prec < 17; ++prec) {
      std::snprintf(buf, sizeof buf, "%.*g", prec, x);
      if (std::strtod(buf, nullptr) == x) {
        s = buf;
        break;
      }
    }
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
  }
  static std::string render(const std::string& s) { return toml_quote(s); }
  static std::string render(const std::vector<std::string>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_quote(v[i]);
    return out + "]";
  }
  static std::string render(const Rational& r) {
    return toml_quote(std::to_string(r.num) + "/" + std::to_string(r.den));
  }
  static std::string render(PipeFormat f) { return toml_quote(pipe_format_name(f)); }
  static std::string render(CutStatistic s) { return toml_quote(s == CutStatistic::Mean ? "mean" : "p95"); }

  std::ostringstream out_;
  std::string table_;
};

}  // namespace detail

/// Defaults overlaid with the document's values. Unknown keys and tables are
/// errors. Does not validate ranges; call validate() for that.
inline PipelineConfig config_from_toml(const TomlDocument& doc) {
  PipelineConfig cfg;
  detail::ConfigAssigner assign(doc);
  visit_config(cfg, assign);
  assign.check_unused();
  return cfg;
}

inline PipelineConfig parse_config(const std::string& text) { return config_from_toml(parse_toml(text)); }

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidConfig, path + ": " + e.what());
  }
}

/// Effective configuration as TOML; parse_config(print_config(c)) reproduces c.
inline std::string print_config(const PipelineConfig& cfg) {
  detail::ConfigPrinter p;
  visit_config(cfg, p);
  return p.str();
}

}  // namespace clipcurate
