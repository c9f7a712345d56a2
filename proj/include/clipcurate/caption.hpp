#pragma once

// Long-form clip captions from an external vision-language service, and the
// checks a caption must pass before it goes into the manifest.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include "clipcurate/error.hpp"
#include "clipcurate/media.hpp"
#include "clipcurate/service.hpp"

namespace clipcurate {

inline std::vector<std::string> default_camera_vocabulary() {
  return {"camera", "pan", "tilt", "dolly", "truck", "pedestal", "orbit", "zoom", "moves left", "moves right"};
}

struct CaptionConfig {
  ServiceConfig service{.url = "", .timeout_s = 60.0, .attempts = 3, .backoff_s = 1.0, .backoff_factor = 4.0,
                        .rps_limit = 0.0, .fallback = false};
  std::string template_id = "spatiotemporal-v1";
  int frames = 16;  // frames sent per clip, taken evenly from the sampling plan
  std::size_t min_words = 80;
  std::string target_language = "en";
  std::vector<std::string> vocabulary = default_camera_vocabulary();

  void validate() const {
    service.validate("caption");
    if (frames < 4 || frames > 32) throw Error(ErrorCode::InvalidConfig, "caption.frames must be in [4,32]");
    if (vocabulary.empty()) throw Error(ErrorCode::InvalidConfig, "caption vocabulary is empty");
  }
};

struct CaptionRecord {
  std::string clip_id;
  std::string text;
  std::size_t word_count = 0;
  std::vector<std::string> camera_terms_found;
  std::string language_tag;
  std::string model_id;
  int attempts = 0;

  bool operator==(const CaptionRecord&) const = default;
};

/// Number of ASCII-whitespace separated tokens.
inline std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

namespace detail {

inline std::string regex_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::string_view(R"(\^$.|?*+()[]{}/-)").find(c) != std::string_view::npos) out += '\\';
    out += c;
  }
  return out;
}

// Whole-word, case-insensitive pattern for one vocabulary term. Words may
// carry a regular inflection ("pans", "panning", "dollies") and multi-word
// terms allow any run of whitespace between words.
inline std::regex term_pattern(const std::string& term) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : term) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(cur), cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) words.push_back(cur);
  if (words.empty()) throw Error(ErrorCode::InvalidConfig, "blank vocabulary term");
  const std::string last = words.back();
  auto ends_with = [&](std::string_view suf) {
    return last.size() >= suf.size() && last.compare(last.size() - suf.size(), suf.size(), suf) == 0;
  };
  std::string stem = regex_escape(last);
  std::string alt = "s|ing|ed";
  if (ends_with("e")) alt += "|d";
  if (ends_with("s") || ends_with("x") || ends_with("z") || ends_with("ch") || ends_with("sh")) alt += "|es";
  alt += "|" + regex_escape(last.substr(last.size() - 1)) + "(?:ing|ed)";  // pan -> panning, panned
  if (last.size() > 1 && ends_with("y")) {
    stem = "(?:" + stem + "|" + regex_escape(last.substr(0, last.size() - 1)) + "(?=ie))";
    alt += "|ies|ied";
  }
  std::string pat = "\\b";
  for (std::size_t i = 0; i + 1 < words.size(); ++i) pat += regex_escape(words[i]) + "\\s+";
  pat += stem + "(?:" + alt + ")?\\b";
  return std::regex(pat, std::regex::ECMAScript | std::regex::icase);
}

}  // namespace detail

/// Vocabulary terms that occur in `text`, in vocabulary order.
class TermMatcher {
 public:
  explicit TermMatcher(std::vector<std::string> vocabulary) : terms_(std::move(vocabulary)) {
    for (const auto& t : terms_) patterns_.push_back(detail::term_pattern(t));
  }

  std::vector<std::string> find(const std::string& text) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < terms_.size(); ++i)
      if (std::regex_search(text, patterns_[i])) out.push_back(terms_[i]);
    return out;
  }

  const std::vector<std::string>& terms() const { return terms_; }

 private:
  std::vector<std::string> terms_;
  std::vector<std::regex> patterns_;
};

/// Rough script check used when the service does not report a language:
/// "en" when at least 90% of letters are ASCII, otherwise "und".
inline std::string guess_language(std::string_view text) {
  std::size_t ascii_letters = 0, other = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isalpha(c)) ++ascii_letters;
    else if (c >= 0xC0) ++other;  // lead byte of a multi-byte UTF-8 character
  }
  if (ascii_letters + other == 0) return "und";
  return static_cast<double>(ascii_letters) / static_cast<double>(ascii_letters + other) >= 0.9 ? "en" : "und";
}

inline std::vector<std::string> load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read vocabulary file '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidConfig, "vocabulary file '" + path + "' has no terms");
  return out;
}

/// POSTs {clip_id, template_id, frames (base64 RGB)} and expects
/// {"text": ..., "model_id": ..., optional "language": ...}.
class CaptionClient {
 public:
  explicit CaptionClient(CaptionConfig cfg, Sleeper sleeper = real_sleep)
      : cfg_(std::move(cfg)), client_(cfg_.service, std::move(sleeper)), matcher_(cfg_.vocabulary) {}

  const CaptionConfig& config() const { return cfg_; }
  const TermMatcher& matcher() const { return matcher_; }

  CaptionRecord request(std::span<const ColorFrame> frames, const std::string& template_id,
                        const std::string& clip_id) const {
    if (frames.size() < 4 || frames.size() > 32)
      throw Error(ErrorCode::InvalidArgument,
                  "request_caption needs 4-32 frames, got " + std::to_string(frames.size()));
    json payload = rgb_payload(frames);
    payload["clip_id"] = clip_id;
    payload["template_id"] = template_id;
    const auto res = client_.post(payload);
    CaptionRecord r;
    r.clip_id = clip_id;
    r.attempts = res.attempts;
    r.text = detail::require_string(res.body, "text");
    if (word_count(r.text) == 0) throw Error(ErrorCode::EmptyCaption, "caption service returned empty text");
    r.model_id = res.body.contains("model_id") && res.body["model_id"].is_string()
                     ? res.body["model_id"].get<std::string>()
                     : "unknown";
    r.language_tag = res.body.contains("language") && res.body["language"].is_string()
                         ? res.body["language"].get<std::string>()
                         : guess_language(r.text);
    r.word_count = word_count(r.text);
    r.camera_terms_found = matcher_.find(r.text);
    return r;
  }

 private:
  CaptionConfig cfg_;
  JsonClient client_;
  TermMatcher matcher_;
};

inline CaptionRecord request_caption(const CaptionClient& client, std::span<const ColorFrame> frames,
                                     const std::string& template_id, const std::string& clip_id = {}) {
  return client.request(frames, template_id, clip_id);
}

struct ValidationReport {
  bool pass = true;
  std::vector<std::string> flags;  // too_short, no_camera_terms, non_target_language
  std::vector<std::string> camera_terms_found;
};

inline std::string primary_subtag(std::string tag) {
  tag = tag.substr(0, tag.find_first_of("-_"));
  std::transform(tag.begin(), tag.end(), tag.begin(), [](unsigned char c) { return std::tolower(c); });
  return tag;
}

inline ValidationReport validate_caption(const CaptionRecord& record, const CaptionConfig& cfg,
                                         const TermMatcher& matcher) {
  ValidationReport v;
  v.camera_terms_found = matcher.find(record.text);
  if (word_count(record.text) < cfg.min_words) v.flags.push_back("too_short");
  if (v.camera_terms_found.empty()) v.flags.push_back("no_camera_terms");
  const std::string lang = record.language_tag.empty() ? guess_language(record.text) : record.language_tag;
  if (primary_subtag(lang) != primary_subtag(cfg.target_language)) v.flags.push_back("non_target_language");
  v.pass = v.flags.empty();
  return v;
}

inline ValidationReport validate_caption(const CaptionRecord& record, const CaptionConfig& cfg = {}) {
  return validate_caption(record, cfg, TermMatcher(cfg.vocabulary));
}

}  // namespace clipcurate
