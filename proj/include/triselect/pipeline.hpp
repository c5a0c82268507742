#pragma once

// Stage I -> II -> III orchestration: reads the task and manifest, filters,
// clusters, describes and selects, then writes reports and copies the
// selected files.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "triselect/descriptor_cache.hpp"
#include "triselect/error.hpp"
#include "triselect/graph_select.hpp"
#include "triselect/image_io.hpp"
#include "triselect/matching.hpp"
#include "triselect/metadata.hpp"
#include "triselect/plots.hpp"
#include "triselect/prefilter.hpp"
#include "triselect/report.hpp"
#include "triselect/sift.hpp"
#include "triselect/spectral.hpp"

namespace triselect {

namespace fs = std::filesystem;

/// Images with fewer keypoints than this are left out of Stage III.
inline constexpr std::size_t kMinKeypoints = 5;

struct PipelineConfig {
  fs::path task_path;
  fs::path manifest_path;
  fs::path image_root;
  fs::path out_dir;
  std::size_t budget = 10;
  std::optional<double> tau = 0.5;  // nullopt: calibrate from the similarities
  std::optional<double> sigma;      // RBF width; median pairwise distance when absent
  double sigma_d = 0.4;
  double ratio = 0.8;
  int k_min = 2;
  int k_max = 0;  // 0 = min(10, n - 1)
  std::uint64_t seed = 0;
  int stages = 3;  // run stages 1..stages
  unsigned threads = 1;
  bool plots = false;
  ExtractorParams extractor;
  std::optional<fs::path> cache_dir;

  void validate() const {
    const auto bad = [](const std::string& why) { return Error(ErrorKind::ConfigInvalid, why); };
    if (stages < 1 || stages > 3) throw bad(fmt::format("stages must be 1, 12 or 123 (got {} stages)", stages));
    if (budget < 1) throw bad("budget must be >= 1");
    if (tau && !(*tau > 0.0 && *tau <= 1.0)) throw bad(fmt::format("tau {} outside (0, 1]", *tau));
    if (!(ratio > 0.0 && ratio <= 1.0)) throw bad(fmt::format("ratio {} outside (0, 1]", ratio));
    if (!(sigma_d > 0.0) || !std::isfinite(sigma_d)) throw bad(fmt::format("sigma-d {} must be > 0", sigma_d));
    if (sigma && (!(*sigma > 0.0) || !std::isfinite(*sigma))) throw bad(fmt::format("sigma {} must be > 0", *sigma));
    if (k_min < 2) throw bad("k-min must be >= 2");
    if (k_max != 0 && k_max < k_min) throw bad("k-max must be >= k-min");
    if (threads < 1) throw bad("threads must be >= 1");
  }
};

namespace detail {

inline std::string read_text(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MalformedField, fmt::format("cannot read {} file {}", what, path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_json(const fs::path& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::ConfigInvalid, fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

/// Image path relative to the image root: the record's own path, else the
/// first existing `<pid>.<ext>`.
inline std::string image_relpath(const ImageRecord& r, const fs::path& root) {
  if (r.path) return *r.path;
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
    const std::string name = fmt::format("{}{}", r.pid, ext);
    if (fs::exists(root / name)) return name;
  }
  return fmt::format("{}.png", r.pid);
}

struct Described {
  std::optional<DescriptorSet> set;
  std::string relpath;
  std::string failure;
  std::size_t keypoints = 0;
};

inline Described describe(const ImageRecord& r, const PipelineConfig& cfg, const std::optional<DescriptorCache>& cache) {
  Described d;
  d.relpath = image_relpath(r, cfg.image_root);
  const fs::path path = cfg.image_root / d.relpath;
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    d.failure = e.what();
    return d;
  }
  const std::uint64_t key = descriptor_cache_key(bytes, cfg.extractor);
  if (cache) {
    if (auto hit = cache->load(key, r.pid)) d.set = std::move(hit);
  }
  if (!d.set) {
    try {
      d.set = extract_features(decode_image(bytes), cfg.extractor, r.pid);
    } catch (const Error& e) {
      d.failure = e.what();
      return d;
    }
    if (cache) cache->store(key, *d.set);
  }
  d.keypoints = d.set->size();
  if (d.keypoints < kMinKeypoints) {
    d.failure = fmt::format("only {} keypoints (need {})", d.keypoints, kMinKeypoints);
    d.set.reset();
  }
  return d;
}

inline Coverage angular_coverage(double ang_inter, const std::vector<double>& angles) {
  Coverage c;
  c.ang_inter = ang_inter;
  c.sectors = std::max(1, static_cast<int>(std::ceil(kTwoPi / ang_inter - 1e-12)));
  std::vector<bool> hit(static_cast<std::size_t>(c.sectors), false);
  for (double a : angles) {
    const int s = std::min(c.sectors - 1, static_cast<int>(std::floor(wrap_two_pi(a) / ang_inter)));
    hit[static_cast<std::size_t>(s)] = true;
  }
  c.covered = static_cast<int>(std::count(hit.begin(), hit.end(), true));
  c.fraction = static_cast<double>(c.covered) / c.sectors;
  return c;
}

}  // namespace detail

/// Stage II over the Stage I survivors. Fewer than three records cannot be
/// scored by silhouette, so they form a single cluster.
inline Stage2Report run_stage2(const std::vector<ImageRecord>& kept, const TaskSpec& task, const PipelineConfig& cfg,
                               std::vector<std::string>& warnings) {
  if (kept.empty()) throw Error(ErrorKind::EmptyStageInput, "stage 2 received no records from stage 1");
  Stage2Report r;
  for (const auto& rec : kept) r.pids.push_back(rec.pid);
  if (kept.size() >= 2) r.norm = compute_norm_stats(kept, task);
  r.features = build_features(kept, task, r.norm);
  const int n = static_cast<int>(kept.size());
  if (n < 3) {
    r.single_cluster_fallback = true;
    r.assignment = ClusterAssignment{1, std::vector<int>(kept.size(), 0)};
    r.silhouette.best_k = 1;
    r.sigma = cfg.sigma.value_or(n == 2 ? default_sigma(r.features) : 1.0);
    warnings.push_back(fmt::format("stage 2: {} record(s) kept; clustering skipped, single cluster used", n));
    return r;
  }
  SelectKOptions opt;
  opt.k_min = cfg.k_min;
  opt.k_max = cfg.k_max > 0 ? cfg.k_max : std::min(10, n - 1);
  if (opt.k_max > n - 1) {
    warnings.push_back(fmt::format("stage 2: k-max {} reduced to {} for {} records", opt.k_max, n - 1, n));
    opt.k_max = n - 1;
  }
  if (opt.k_min > opt.k_max) {
    throw Error(ErrorKind::InvalidK, fmt::format("k-min {} exceeds the largest usable k {} for {} records", opt.k_min,
                                                 opt.k_max, n));
  }
  opt.sigma = cfg.sigma;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;
  auto res = select_k(r.features, opt, r.pids);
  r.sigma = res.sigma;
  r.assignment = std::move(res.assignment);
  r.silhouette = std::move(res.report);
  return r;
}

/// Stage III: describe every clustered image, then select per cluster.
inline Stage3Report run_stage3(const std::vector<ImageRecord>& records, const ClusterAssignment& assignment,
                               const PipelineConfig& cfg) {
  Stage3Report r;
  r.sigma_d = cfg.sigma_d;
  r.ratio = cfg.ratio;
  std::optional<DescriptorCache> cache;
  if (cfg.cache_dir) cache.emplace(*cfg.cache_dir);

  std::vector<detail::Described> described(records.size());
  parallel_for(records.size(), cfg.threads, [&](std::size_t i) { described[i] = detail::describe(records[i], cfg, cache); });

  std::map<int, ClusterDescriptors> by_label;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& d = described[i];
    if (d.set) r.keypoint_counts[records[i].pid] = d.keypoints;
    if (!d.set) {
      r.excluded.push_back({records[i].pid, d.relpath, d.failure});
      continue;
    }
    auto& c = by_label[assignment.labels[i]];
    c.cluster = assignment.labels[i];
    c.images.push_back(std::move(*d.set));
  }
  if (by_label.empty()) throw Error(ErrorKind::EmptyStageInput, "stage 3 has no describable images");

  std::vector<ClusterSimilarity> sims;
  for (auto& [label, c] : by_label) {
    ClusterSimilarity cs;
    cs.cluster = label;
    for (const auto& img : c.images) cs.pids.push_back(img.pid);
    cs.similarity = similarity_matrix(c.images, cfg.sigma_d, cfg.ratio, cfg.threads);
    sims.push_back(std::move(cs));
  }
  r.tau_calibrated = !cfg.tau.has_value();
  r.tau = cfg.tau ? *cfg.tau : calibrate_tau(sims, cfg.budget);
  r.selection = select_from_similarity(sims, r.tau, cfg.budget, cfg.threads);
  return r;
}

/// Runs the enabled stages on an already-parsed task and manifest. Image
/// paths resolve against cfg.image_root; nothing is written.
inline RunReport execute(const TaskSpec& task, const std::vector<ImageRecord>& records, const PipelineConfig& cfg) {
  cfg.validate();
  RunReport rep;
  rep.stages = cfg.stages;

  auto t0 = std::chrono::steady_clock::now();
  auto pre = preselect(records, task);
  rep.stage1 = std::move(pre.report);
  for (const auto& r : pre.kept) rep.kept_pids.push_back(r.pid);
  rep.timings.stage1_ms = detail::ms_since(t0);
  if (cfg.stages < 2) return rep;

  t0 = std::chrono::steady_clock::now();
  rep.stage2 = run_stage2(pre.kept, task, cfg, rep.warnings);
  rep.timings.stage2_ms = detail::ms_since(t0);
  if (cfg.stages < 3) return rep;

  t0 = std::chrono::steady_clock::now();
  rep.stage3 = run_stage3(pre.kept, rep.stage2->assignment, cfg);
  rep.timings.stage3_ms = detail::ms_since(t0);
  for (const auto& e : rep.stage3->excluded) {
    rep.warnings.push_back(fmt::format("stage 3: pid {} excluded: {}", e.pid, e.reason));
  }

  if (task.ang_inter) {
    std::map<std::uint64_t, const ImageRecord*> by_pid;
    for (const auto& k : pre.kept) by_pid[k.pid] = &k;
    std::vector<double> angles;
    for (std::uint64_t pid : rep.stage3->selection.selected) angles.push_back(capture_angle(*by_pid.at(pid), task));
    rep.coverage = detail::angular_coverage(*task.ang_inter, angles);
  }
  return rep;
}

/// Writes the report documents (and plots when requested) into cfg.out_dir.
inline void write_reports(const RunReport& rep, const PipelineConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  detail::write_json(cfg.out_dir / "stage1_report.json", stage1_json(rep.stage1, rep.kept_pids));
  if (rep.stage2) detail::write_json(cfg.out_dir / "stage2_report.json", stage2_json(*rep.stage2));
  if (rep.stage3) detail::write_json(cfg.out_dir / "stage3_report.json", stage3_json(*rep.stage3));
  detail::write_json(cfg.out_dir / "report.json", summary_json(rep));
  detail::write_json(cfg.out_dir / "timings.json", timings_json(rep.timings));
  if (cfg.plots) emit_plots(rep, cfg.out_dir);
}

/// Full run from files: parse, execute, copy the selected images under
/// `<out>/selected/`, write reports.
inline RunReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const TaskSpec task = parse_task_spec(detail::read_text(cfg.task_path, "task"));
  const Manifest manifest = parse_manifest(detail::read_text(cfg.manifest_path, "manifest"));
  RunReport rep = execute(task, manifest.records, cfg);
  if (manifest.unknown_key_warnings > 0) {
    rep.warnings.insert(rep.warnings.begin(),
                        fmt::format("manifest: {} unknown key(s) ignored", manifest.unknown_key_warnings));
  }

  if (rep.stage3) {
    std::map<std::uint64_t, const ImageRecord*> by_pid;
    for (const auto& r : manifest.records) by_pid[r.pid] = &r;
    for (std::uint64_t pid : rep.stage3->selection.selected) {
      const std::string rel = detail::image_relpath(*by_pid.at(pid), cfg.image_root);
      const fs::path dest = cfg.out_dir / "selected" / rel;
      fs::create_directories(dest.parent_path());
      fs::copy_file(cfg.image_root / rel, dest, fs::copy_options::overwrite_existing);
      rep.stage3->copied.push_back((fs::path("selected") / rel).generic_string());
    }
  }

  write_reports(rep, cfg);
  return rep;
}

}  // namespace triselect
