#pragma once

// Manifest summaries: dataset statistics plus score, label and caption
// length histograms, written as stats.json and CSV files.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clipcurate/manifest.hpp"

namespace clipcurate {

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::int64_t> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }

  /// Values below `lo` land in the first bin, values at or above `hi` in the last.
  void add(double x) {
    const auto bins = static_cast<std::int64_t>(counts.size());
    auto b = static_cast<std::int64_t>(std::floor((x - lo) / bin_width()));
    ++counts[static_cast<std::size_t>(std::clamp<std::int64_t>(b, 0, bins - 1))];
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

inline Histogram make_histogram(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw Error(ErrorCode::InvalidArgument, "histogram needs bins > 0 and hi > lo");
  return {lo, hi, std::vector<std::int64_t>(bins, 0)};
}

struct ReportOptions {
  double theta_aes = 3.5;
  double theta_qual = 4.0;
  std::size_t score_bins = 20;  // over [0, 10]
  double words_bin = 25.0;
  std::size_t words_bins = 20;  // last bin also takes everything longer
};

struct ManifestReport {
  DatasetStats stats;
  std::int64_t records = 0;
  Histogram aesthetic_all, aesthetic_kept;
  Histogram quality_all, quality_kept;
  std::array<std::int64_t, 6> labels_all{};
  std::array<std::int64_t, 6> labels_kept{};
  Histogram caption_words;  // kept clips with a caption
  double kept_frac_aes_at_least = 0.0;   // kept clips with aesthetic >= theta_aes
  double kept_frac_qual_at_least = 0.0;  // kept clips with quality >= theta_qual
  double all_frac_aes_at_least = 0.0;
  double all_frac_qual_at_least = 0.0;
  std::map<std::string, std::int64_t> reasons;

  nlohmann::json to_json(const ReportOptions& opt) const {
    nlohmann::json j = stats.to_json();
    j["records"] = records;
    j["decision_reasons"] = reasons;
    j["thresholds"] = {{"theta_aes", opt.theta_aes}, {"theta_qual", opt.theta_qual}};
    j["kept_fraction_aesthetic_at_least_theta"] = kept_frac_aes_at_least;
    j["kept_fraction_quality_at_least_theta"] = kept_frac_qual_at_least;
    j["all_fraction_aesthetic_at_least_theta"] = all_frac_aes_at_least;
    j["all_fraction_quality_at_least_theta"] = all_frac_qual_at_least;
    return j;
  }
};

inline ManifestReport summarize_manifest(std::span<const ClipManifestRecord> records, const ReportOptions& opt = {}) {
  ManifestReport rep;
  rep.stats = compute_stats(records);
  rep.records = static_cast<std::int64_t>(records.size());
  rep.aesthetic_all = rep.aesthetic_kept = rep.quality_all = rep.quality_kept =
      make_histogram(0.0, 10.0, opt.score_bins);
  rep.caption_words = make_histogram(0.0, opt.words_bin * static_cast<double>(opt.words_bins), opt.words_bins);
  std::int64_t kept_aes = 0, kept_qual = 0, all_aes = 0, all_qual = 0;
  for (const auto& r : records) {
    const int label = static_cast<int>(r.motion.label) - 1;
    rep.aesthetic_all.add(r.scores.aesthetic);
    rep.quality_all.add(r.scores.quality);
    ++rep.labels_all[label];
    ++rep.reasons[to_string(r.decision.reason)];
    all_aes += r.scores.aesthetic >= opt.theta_aes;
    all_qual += r.scores.quality >= opt.theta_qual;
    if (!r.decision.keep) continue;
    rep.aesthetic_kept.add(r.scores.aesthetic);
    rep.quality_kept.add(r.scores.quality);
    ++rep.labels_kept[label];
    kept_aes += r.scores.aesthetic >= opt.theta_aes;
    kept_qual += r.scores.quality >= opt.theta_qual;
    if (r.caption) rep.caption_words.add(static_cast<double>(r.caption->word_count));
  }
  auto frac = [](std::int64_t a, std::int64_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  rep.kept_frac_aes_at_least = frac(kept_aes, rep.stats.kept_clips);
  rep.kept_frac_qual_at_least = frac(kept_qual, rep.stats.kept_clips);
  rep.all_frac_aes_at_least = frac(all_aes, rep.records);
  rep.all_frac_qual_at_least = frac(all_qual, rep.records);
  return rep;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
}

inline std::string histogram_csv(const Histogram& all, const Histogram* kept) {
  std::string csv = kept ? "bin_lo,bin_hi,all,kept\n" : "bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < all.counts.size(); ++i) {
    const double a = all.lo + all.bin_width() * static_cast<double>(i);
    csv += fixed6(a) + ',' + fixed6(a + all.bin_width()) + ',' + std::to_string(all.counts[i]);
    if (kept) csv += ',' + std::to_string(kept->counts[i]);
    csv += '\n';
  }
  return csv;
}

}  // namespace detail

/// Reads the manifest strictly and writes stats.json, aesthetic.csv,
/// quality.csv, labels.csv and caption_words.csv into `out_dir`.
inline ManifestReport report(const std::string& manifest_path, const std::string& out_dir,
                             const ReportOptions& opt = {}) {
  const auto records = read_records(manifest_path, true).records;
  const auto rep = summarize_manifest(records, opt);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IOFailure, "cannot create '" + out_dir + "': " + ec.message());
  const std::filesystem::path dir(out_dir);
  detail::write_file(dir / "stats.json", rep.to_json(opt).dump(2) + "\n");
  detail::write_file(dir / "aesthetic.csv", detail::histogram_csv(rep.aesthetic_all, &rep.aesthetic_kept));
  detail::write_file(dir / "quality.csv", detail::histogram_csv(rep.quality_all, &rep.quality_kept));
  std::string labels = "label,all,kept\n";
  for (int c = 0; c < 6; ++c)
    labels += std::string(to_string(static_cast<MotionClass>(c + 1))) + ',' + std::to_string(rep.labels_all[c]) + ',' +
              std::to_string(rep.labels_kept[c]) + '\n';
  detail::write_file(dir / "labels.csv", labels);
  detail::write_file(dir / "caption_words.csv", detail::histogram_csv(rep.caption_words, nullptr));
  return rep;
}

}  // namespace clipcurate
