// curate: command-line front end for the clip curation pipeline.
//
// Exit codes: 0 success, 1 bad input (unreadable source, bad arguments to a
// debug command), 2 configuration error, 3 manifest sink failure.

#include <CLI11.hpp>
#include <iostream>

#include "clipcurate/config.hpp"
#include "clipcurate/pipeline.hpp"
#include "clipcurate/report.hpp"

using namespace clipcurate;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSink = 3;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidConfig:
      return kExitConfig;
    case ErrorCode::IOFailure:
    case ErrorCode::SinkFull:
    case ErrorCode::MalformedLine:
      return kExitSink;
    default:
      return kExitInput;
  }
}

nlohmann::json meta_json(const VideoMeta& m) {
  return {{"source_id", m.source_id},   {"path", m.path_or_uri},
          {"fps", std::to_string(m.fps.num) + "/" + std::to_string(m.fps.den)},
          {"width", m.width},
          {"height", m.height},         {"frame_count", m.frame_count},
          {"duration_s", m.duration_s}};
}

nlohmann::json plan_json(const SamplingPlan& p) {
  return {{"n", p.n},         {"fps", p.fps},   {"clip_n", p.clip_n},
          {"m", p.m},         {"m_trimmed", p.m_trimmed},
          {"trim_fraction", p.trim_fraction}, {"first", p.first},
          {"last", p.last},   {"indices", p.indices}};
}

struct RunArgs {
  std::string config;
  std::vector<std::string> stages;
  int workers = 0;
  std::string manifest;
  std::vector<std::string> sources;
  bool print_config = false;
};

int cmd_run(const RunArgs& a) {
  PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : load_config(a.config);
  if (!a.stages.empty()) cfg.stages = a.stages;
  if (a.workers > 0) cfg.workers = a.workers;
  if (!a.manifest.empty()) cfg.manifest = a.manifest;
  if (!a.sources.empty()) cfg.sources = a.sources;
  if (a.print_config) {
    cfg.validate();
    std::cout << print_config(cfg);
    return 0;
  }
  const auto rep = run(cfg);
  for (const auto& e : rep.errors) std::cerr << "curate: " << e.source << ": " << e.message << "\n";
  std::cout << rep.to_json().dump(2) << "\n";
  return 0;
}

int cmd_classify(const std::string& clip, const std::string& config) {
  const PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
  const auto a = analyze_source(clip, cfg);
  const auto label = classify_clip(a.pairs, cfg.classifier);
  const auto s = summarize_clip(a.pairs, cfg.classifier);
  nlohmann::json out = {{"clip", meta_json(a.meta)},
                        {"label", to_string(label.label)},
                        {"description", describe(label.label)},
                        {"confidence", label.confidence},
                        {"rule", label.rule},
                        {"summary",
                         {{"pairs", s.pairs},
                          {"disrupted_fraction", s.disrupted_fraction},
                          {"median_translation", s.median_translation},
                          {"median_abs_div", s.median_abs_div},
                          {"median_abs_curl", s.median_abs_curl},
                          {"median_inlier", s.median_inlier},
                          {"median_nonaffine", s.median_nonaffine},
                          {"crossings", s.crossings},
                          {"net_ratio", s.net_ratio}}}};
  if (!std::isnan(s.median_center_mag)) out["summary"]["median_center_mag"] = s.median_center_mag;
  if (!std::isnan(s.median_border_mag)) out["summary"]["median_border_mag"] = s.median_border_mag;
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera-motion-aware video clip curation"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run_cmd = app.add_subcommand("run", "Segment, classify, score, filter, sample and caption sources");
  run_cmd->add_option("--config", run_args.config, "TOML config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--stages", run_args.stages, "Stages to enable, comma separated")->delimiter(',');
  run_cmd->add_option("--workers", run_args.workers, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--manifest", run_args.manifest, "Manifest path, overrides the config");
  run_cmd->add_option("--source", run_args.sources, "Source video, overrides the config sources");
  run_cmd->add_flag("--print-config", run_args.print_config, "Print the effective config and exit");

  std::string manifest, out_dir;
  auto* report_cmd = app.add_subcommand("report", "Summarize a manifest into stats.json and histograms");
  report_cmd->add_option("--manifest", manifest)->required();
  report_cmd->add_option("--out", out_dir)->required();

  std::string probe_src;
  auto* probe_cmd = app.add_subcommand("probe", "Print stream metadata for a source");
  probe_cmd->add_option("source", probe_src)->required();

  std::int64_t clip_n = 0, n = 0;
  double trim = 0.10, fps = 30.0;
  auto* sample_cmd = app.add_subcommand("sample", "Print the sampling plan for a clip length");
  sample_cmd->add_option("--clip-n", clip_n)->required();
  sample_cmd->add_option("--n", n)->required();
  sample_cmd->add_option("--trim", trim);
  sample_cmd->add_option("--fps", fps);

  std::string clip, classify_config;
  auto* classify_cmd = app.add_subcommand("classify", "Classify camera motion over a whole clip file");
  classify_cmd->add_option("--clip", clip)->required();
  classify_cmd->add_option("--config", classify_config)->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run_args);
    if (*report_cmd) {
      const auto rep = report(manifest, out_dir);
      std::cout << rep.to_json(ReportOptions{}).dump(2) << "\n";
      return 0;
    }
    if (*probe_cmd) {
      std::cout << meta_json(probe(probe_src)).dump(2) << "\n";
      return 0;
    }
    if (*sample_cmd) {
      std::cout << plan_json(plan_samples(clip_n, n, trim, fps)).dump(2) << "\n";
      return 0;
    }
    if (*classify_cmd) return cmd_classify(clip, classify_config);
  } catch (const Error& e) {
    std::cerr << "curate: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "curate: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
