#pragma once

// End-to-end curation run: decode, segment, classify, score, filter, sample
// and caption every source, appending one manifest record per clip.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_set>
#include <vector>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/caption.hpp"
#include "clipcurate/classifier_client.hpp"
#include "clipcurate/config.hpp"
#include "clipcurate/mag_sampler.hpp"
#include "clipcurate/manifest.hpp"
#include "clipcurate/media.hpp"
#include "clipcurate/quality.hpp"
#include "clipcurate/segmenter.hpp"

namespace clipcurate {

struct SourceError {
  std::string source;
  std::string code;
  std::string message;
};

struct RunReport {
  std::int64_t sources = 0;
  std::int64_t sources_ok = 0;
  std::int64_t sources_failed = 0;
  std::int64_t clips_found = 0;
  std::int64_t clips_skipped = 0;  // already in the manifest
  std::int64_t kept = 0;
  std::int64_t dropped = 0;
  std::map<std::string, std::int64_t> dropped_by_reason;
  std::array<std::int64_t, 6> label_histogram{};  // newly classified clips
  std::int64_t records_written = 0;
  std::int64_t captions_requested = 0;
  std::int64_t captions_failed = 0;
  double clips_per_source_avg = 0.0;  // clips_found / sources_ok
  double elapsed_s = 0.0;
  bool interrupted = false;
  std::vector<SourceError> errors;

  nlohmann::json to_json() const {
    nlohmann::json labels = nlohmann::json::object();
    for (int c = 1; c <= 6; ++c) labels[to_string(static_cast<MotionClass>(c))] = label_histogram[c - 1];
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& e : errors) errs.push_back({{"source", e.source}, {"code", e.code}, {"message", e.message}});
    return {{"sources", sources},
            {"sources_ok", sources_ok},
            {"sources_failed", sources_failed},
            {"clips_found", clips_found},
            {"clips_skipped", clips_skipped},
            {"kept", kept},
            {"dropped", dropped},
            {"dropped_by_reason", dropped_by_reason},
            {"label_histogram", labels},
            {"records_written", records_written},
            {"captions_requested", captions_requested},
            {"captions_failed", captions_failed},
            {"clips_per_source_avg", clips_per_source_avg},
            {"elapsed_s", elapsed_s},
            {"interrupted", interrupted},
            {"errors", errs}};
  }
};

struct RunOptions {
  // Stop writing after this many new records, leaving the run as if it had
  // been killed. Negative means no limit.
  std::int64_t stop_after_records = -1;
  Sleeper sleeper = real_sleep;
};

/// Everything computed for one source, in clip order.
struct SourceResult {
  std::vector<ClipManifestRecord> records;
  std::int64_t clips_found = 0;
  std::int64_t clips_skipped = 0;
  std::array<std::int64_t, 6> labels{};
  std::int64_t captions_requested = 0;
  std::int64_t captions_failed = 0;
  std::optional<SourceError> error;
};

inline std::vector<std::string> resolve_sources(const PipelineConfig& cfg) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  auto add = [&](const std::string& s) {
    if (seen.insert(s).second) out.push_back(s);
  };
  for (const auto& s : cfg.sources) add(s);
  if (!cfg.source_list.empty())
    for (const auto& s : read_source_list(cfg.source_list)) add(s);
  return out;
}

/// Frame indices (relative to the clip) at which the per-clip stages look.
struct ClipFramePlan {
  std::vector<std::int64_t> score;
  std::vector<std::int64_t> classify;
  std::optional<SamplingPlan> sampling;
  std::vector<std::int64_t> caption;
};

/// Services and settings shared by all workers.
class ClipProcessor {
 public:
  ClipProcessor(const PipelineConfig& cfg, Sleeper sleeper)
      : cfg_(cfg), filter_(cfg.effective_filter()), caption_cfg_(cfg.effective_caption()) {
    if (cfg.classifier_service.enabled()) classifier_.emplace(cfg.classifier_service, sleeper);
    if (cfg.scorer_service.enabled()) scorer_.emplace(cfg.scorer_service, sleeper);
    if (cfg.has_stage(Stage::Caption)) captioner_.emplace(caption_cfg_, sleeper);
  }

  const PipelineConfig& config() const { return cfg_; }

  ClipFramePlan frame_plan(const ClipSpan& span, double fps) const {
    ClipFramePlan p;
    const std::int64_t n = span.frame_count();
    p.score = plan_samples(n, std::min<std::int64_t>(cfg_.score_frames, n), 0.0).indices;
    if (classifier_) p.classify = plan_samples(n, std::min<std::int64_t>(cfg_.classifier_frames, n), 0.0).indices;
    if (cfg_.has_stage(Stage::Sample)) {
      try {
        p.sampling = plan_samples(n, cfg_.sampler.n, cfg_.sampler.trim_fraction, fps);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InsufficientFrames) throw;
      }
    }
    if (p.sampling && captioner_ && p.sampling->n >= 4) {
      const auto& idx = p.sampling->indices;
      const auto k = std::min<std::int64_t>(caption_cfg_.frames, p.sampling->n);
      for (auto pos : plan_samples(p.sampling->n, k, 0.0).indices) p.caption.push_back(idx[static_cast<std::size_t>(pos)]);
    }
    return p;
  }

  /// Builds the record for one clip. `frames` maps clip-relative indices to
  /// decoded frames and covers every index in `plan`.
  ClipManifestRecord finish_clip(const ClipSpan& span, Rational fps, std::span<const PairMotion> pairs,
                                 const ClipFramePlan& plan, const std::map<std::int64_t, ColorFrame>& frames,
                                 SourceResult& stats) const {
    auto pick = [&](const std::vector<std::int64_t>& idx) {
      std::vector<ColorFrame> out;
      out.reserve(idx.size());
      for (auto i : idx) out.push_back(frames.at(i));
      return out;
    };
    ClipManifestRecord r;
    r.source_id = span.source_id;
    r.span = span;
    r.clip_id = make_clip_id(span);
    r.fps = fps;
    r.duration_s = span_duration_s(span, fps);
    r.pipeline_version = cfg_.pipeline_version;

    const auto heuristic = [&] { return classify_clip(pairs, cfg_.classifier); };
    if (classifier_) {
      std::vector<FrameBuffer> gray;
      for (const auto& f : pick(plan.classify)) {
        FrameBuffer g;
        g.index = f.index;
        g.timestamp_s = f.timestamp_s;
        g.width = f.width;
        g.height = f.height;
        g.luma = rgb_to_luma(f.rgb);
        gray.push_back(std::move(g));
      }
      r.motion = classify_remote(gray, *classifier_, heuristic);
    } else {
      r.motion = heuristic();
    }
    ++stats.labels[static_cast<int>(r.motion.label) - 1];

    const auto score_frames = pick(plan.score);
    r.scores = scorer_ ? score_remote(score_frames, *scorer_, r.clip_id) : score_builtin(score_frames, r.clip_id);
    r.decision = decide(r.scores, r.motion.label, filter_);

    if (r.decision.keep && cfg_.has_stage(Stage::Sample)) {
      if (!plan.sampling) {
        r.decision.keep = false;
        r.decision.reason = Reason::InsufficientFrames;
      } else {
        r.sampling_plan = plan.sampling;
      }
    }
    if (r.decision.keep && captioner_) {
      if (plan.caption.empty()) {
        r.caption_flags.push_back("caption_too_few_frames");
      } else {
        ++stats.captions_requested;
        try {
          auto cap = request_caption(*captioner_, pick(plan.caption), caption_cfg_.template_id, r.clip_id);
          r.caption_flags = validate_caption(cap, caption_cfg_, captioner_->matcher()).flags;
          r.caption = std::move(cap);
        } catch (const Error& e) {
          ++stats.captions_failed;
          switch (e.code()) {
            case ErrorCode::ServiceUnavailable: r.caption_flags.push_back("caption_unavailable"); break;
            case ErrorCode::EmptyCaption: r.caption_flags.push_back("caption_empty"); break;
            case ErrorCode::MalformedResponse: r.caption_flags.push_back("caption_malformed"); break;
            default: throw;
          }
        }
      }
    }
    return canonicalize(std::move(r));
  }

 private:
  const PipelineConfig& cfg_;
  FilterConfig filter_;
  CaptionConfig caption_cfg_;
  std::optional<ClassifierClient> classifier_;
  std::optional<ScorerClient> scorer_;
  std::optional<CaptionClient> captioner_;
};

/// Trace and per-pair motion analysis for one source (first decode pass).
struct SourceAnalysis {
  VideoMeta meta;
  MotionTrace trace;
  std::vector<PairMotion> pairs;
};

inline SourceAnalysis analyze_source(const std::string& source, const PipelineConfig& cfg) {
  SourceAnalysis a;
  a.meta = probe(source, cfg.decoder);
  FrameStream stream(a.meta, cfg.analysis_height, cfg.decoder);
  a.trace = build_trace(stream, cfg.flow, [&](std::int64_t, const FlowField& field, const FrameBuffer& prev,
                                              const FrameBuffer& next) {
    a.pairs.push_back(analyze_pair(field, std::abs(mean_luma(next) - mean_luma(prev))));
  });
  for (std::size_t i = 0; i < a.pairs.size(); ++i)
    if (a.pairs[i].fit_ok) a.trace.pair_stats[i].fit_residual = a.pairs[i].global.rms_residual;
  return a;
}

/// Runs every enabled stage on one source. Errors are captured in the result.
inline SourceResult process_source(const std::string& source, const ClipProcessor& proc,
                                   const std::unordered_set<std::string>& existing) {
  const auto& cfg = proc.config();
  SourceResult res;
  try {
    const SourceAnalysis a = analyze_source(source, cfg);
    const auto spans = extract_spans(a.trace, cfg.segmenter);
    res.clips_found = static_cast<std::int64_t>(spans.size());

    struct Pending {
      ClipSpan span;
      ClipFramePlan plan;
    };
    std::vector<Pending> todo;
    for (const auto& s : spans) {
      if (existing.count(make_clip_id(s))) {
        ++res.clips_skipped;
        continue;
      }
      todo.push_back({s, {}});
    }
    if (!cfg.has_stage(Stage::Classify)) return res;
    auto pairs_of = [&](const ClipSpan& s) {
      return std::span<const PairMotion>(a.pairs).subspan(static_cast<std::size_t>(s.start_frame),
                                                          static_cast<std::size_t>(s.end_frame - s.start_frame));
    };
    if (!cfg.has_stage(Stage::Score)) {
      for (const auto& p : todo) ++res.labels[static_cast<int>(classify_clip(pairs_of(p.span), cfg.classifier).label) - 1];
      return res;
    }

    // Second pass: decode colour frames only where some stage needs them.
    const double fps = a.meta.fps.value();
    for (auto& p : todo) p.plan = proc.frame_plan(p.span, fps);
    FrameStream stream(a.meta, cfg.analysis_height, cfg.decoder);
    std::map<std::int64_t, ColorFrame> frames;
    for (const auto& p : todo) {
      std::vector<std::int64_t> need;
      for (const auto* v : {&p.plan.score, &p.plan.classify, &p.plan.caption}) need.insert(need.end(), v->begin(), v->end());
      std::sort(need.begin(), need.end());
      need.erase(std::unique(need.begin(), need.end()), need.end());
      frames.clear();
      for (auto rel : need) {
        const std::int64_t abs_index = p.span.start_frame + rel;
        while (stream.position() < abs_index) stream.skip();
        auto f = stream.next_color();
        if (!f) throw Error(ErrorCode::UnreadableSource, "stream ended before frame " + std::to_string(abs_index));
        frames.emplace(rel, std::move(*f));
      }
      auto rec = proc.finish_clip(p.span, a.meta.fps, pairs_of(p.span), p.plan, frames, res);
      if (cfg.has_stage(Stage::Filter)) res.records.push_back(std::move(rec));
    }
  } catch (const Error& e) {
    res.records.clear();
    res.error = SourceError{source, std::string(to_string(e.code())), e.what()};
  } catch (const std::exception& e) {
    res.records.clear();
    res.error = SourceError{source, "Internal", e.what()};
  }
  return res;
}

namespace detail {

struct StopRun {};

// Writes per-source results strictly in source order, whatever order they
// finish in. Workers may run at most `window` sources ahead of the writer.
class OrderedSink {
 public:
  OrderedSink(ManifestWriter* writer, std::size_t window, std::int64_t stop_after)
      : writer_(writer), window_(window), stop_after_(stop_after) {}

  /// Blocks until source `i` may start. Returns false once the run is aborting.
  bool admit(std::size_t i) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return aborted_ || i < next_ + window_; });
    return !aborted_;
  }

  void submit(std::size_t i, SourceResult r) {
    std::lock_guard lock(mu_);
    pending_.emplace(i, std::move(r));
    try {
      while (!aborted_) {
        auto it = pending_.find(next_);
        if (it == pending_.end()) break;
        for (const auto& rec : it->second.records) {
          if (stop_after_ >= 0 && written_ >= stop_after_) throw StopRun{};
          if (writer_) writer_->append(rec);
          ++written_;
        }
        done_.push_back(std::move(it->second));
        pending_.erase(it);
        ++next_;
      }
    } catch (const StopRun&) {
      aborted_ = true;
      interrupted_ = true;
    } catch (...) {
      aborted_ = true;
      failure_ = std::current_exception();
    }
    cv_.notify_all();
  }

  bool aborted() const {
    std::lock_guard lock(mu_);
    return aborted_;
  }

  std::int64_t written() const { return written_; }
  bool interrupted() const { return interrupted_; }
  std::exception_ptr failure() const { return failure_; }
  std::vector<SourceResult>& done() { return done_; }

 private:
  ManifestWriter* writer_;
  std::size_t window_;
  std::int64_t stop_after_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::size_t, SourceResult> pending_;
  std::vector<SourceResult> done_;
  std::size_t next_ = 0;
  std::int64_t written_ = 0;
  bool aborted_ = false;
  bool interrupted_ = false;
  std::exception_ptr failure_;
};

}  // namespace detail

/// Clip ids already present in the manifest at `path`, after dropping a
/// partially written last line.
inline std::unordered_set<std::string> existing_clip_ids(const std::string& path) {
  std::unordered_set<std::string> ids;
  if (!std::filesystem::exists(path)) return ids;
  truncate_partial_tail(path);
  for (auto& r : read_records(path, true).records) ids.insert(std::move(r.clip_id));
  return ids;
}

/// Config errors throw InvalidConfig; manifest failures throw IOFailure,
/// SinkFull or MalformedLine. Per-source failures land in RunReport.errors.
inline RunReport run(const PipelineConfig& cfg, const RunOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  const auto sources = resolve_sources(cfg);
  if (sources.empty()) throw Error(ErrorCode::InvalidConfig, "no sources configured");
  const ClipProcessor proc(cfg, opts.sleeper);

  const bool writes = cfg.has_stage(Stage::Filter);
  std::unordered_set<std::string> existing;
  std::optional<ManifestWriter> writer;
  if (writes) {
    const auto parent = std::filesystem::path(cfg.manifest).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    if (ec) throw Error(ErrorCode::IOFailure, "cannot create '" + parent.string() + "': " + ec.message());
    existing = existing_clip_ids(cfg.manifest);
    writer.emplace(cfg.manifest);
  }

  const auto workers = static_cast<std::size_t>(cfg.workers);
  detail::OrderedSink sink(writer ? &*writer : nullptr, workers + static_cast<std::size_t>(cfg.queue_depth),
                           opts.stop_after_records);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= sources.size() || !sink.admit(i)) return;
      sink.submit(i, process_source(sources[i], proc, existing));
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, sources.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (auto f = sink.failure()) std::rethrow_exception(f);

  RunReport rep;
  rep.sources = static_cast<std::int64_t>(sources.size());
  rep.interrupted = sink.interrupted();
  rep.records_written = sink.written();
  for (auto& r : sink.done()) {
    if (r.error) {
      ++rep.sources_failed;
      rep.errors.push_back(*r.error);
      continue;
    }
    ++rep.sources_ok;
    rep.clips_found += r.clips_found;
    rep.clips_skipped += r.clips_skipped;
    rep.captions_requested += r.captions_requested;
    rep.captions_failed += r.captions_failed;
    for (int c = 0; c < 6; ++c) rep.label_histogram[c] += r.labels[c];
    for (const auto& rec : r.records) {
      if (rec.decision.keep) {
        ++rep.kept;
      } else {
        ++rep.dropped;
        ++rep.dropped_by_reason[to_string(rec.decision.reason)];
      }
    }
  }
  if (rep.sources_ok > 0)
    rep.clips_per_source_avg = static_cast<double>(rep.clips_found) / static_cast<double>(rep.sources_ok);
  rep.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace clipcurate
