#pragma once

// Run report types and their JSON form. Timings live in their own document
// so every other report can be compared byte for byte across runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triselect/graph_select.hpp"
#include "triselect/prefilter.hpp"
#include "triselect/spectral.hpp"

namespace triselect {

inline constexpr const char* kReportVersion = "1";

struct Stage2Report {
  std::vector<std::uint64_t> pids;  // Stage I survivors, input order
  std::vector<ViewFeature> features;
  NormStats norm;
  double sigma = 0.0;
  ClusterAssignment assignment;
  SilhouetteReport silhouette;  // per_k empty when clustering was skipped
  bool single_cluster_fallback = false;
};

struct Exclusion {
  std::uint64_t pid = 0;
  std::string path;
  std::string reason;
};

struct Stage3Report {
  double tau = 0.0;
  bool tau_calibrated = false;
  double sigma_d = 0.0;
  double ratio = 0.0;
  std::map<std::uint64_t, std::size_t> keypoint_counts;
  std::vector<Exclusion> excluded;
  SelectionResult selection;
  std::vector<std::string> copied;  // output-relative paths of the selected files
};

struct Coverage {
  double ang_inter = 0.0;
  int sectors = 0;
  int covered = 0;
  double fraction = 0.0;
};

struct StageTimings {
  std::optional<double> stage1_ms;
  std::optional<double> stage2_ms;
  std::optional<double> stage3_ms;
};

struct RunReport {
  int stages = 3;
  FilterReport stage1;
  std::vector<std::uint64_t> kept_pids;  // Stage I survivors, input order
  std::optional<Stage2Report> stage2;
  std::optional<Stage3Report> stage3;
  std::optional<Coverage> coverage;
  StageTimings timings;
  std::vector<std::string> warnings;

  std::size_t count_input() const { return stage1.original_count; }
  std::size_t count_filtered() const { return stage1.kept_count; }
  std::optional<std::size_t> count_selected() const {
    if (!stage3) return std::nullopt;
    return stage3->selection.selected.size();
  }
};

// ---------------------------------------------------------------------------
// JSON

using ojson = nlohmann::ordered_json;

inline ojson filter_set_json(const FilterSet& s) {
  ojson a = ojson::array();
  for (Filter f : s.members()) a.push_back(std::string(filter_name(f)));
  return a;
}

inline ojson stage1_json(const FilterReport& r, const std::vector<std::uint64_t>& kept_pids) {
  ojson j;
  j["original_count"] = r.original_count;
  j["kept_count"] = r.kept_count;
  j["reduction_rate"] = r.reduction_rate;
  ojson pass;
  for (Filter f : kAllFilters) pass[std::string(filter_name(f))] = r.pass_count(f);
  j["per_filter_pass_counts"] = std::move(pass);
  j["kept_pids"] = kept_pids;
  ojson rej = ojson::array();
  for (const auto& x : r.rejected) rej.push_back({{"pid", x.pid}, {"failed", filter_set_json(x.failed)}});
  j["rejected"] = std::move(rej);
  return j;
}

inline ojson stage2_json(const Stage2Report& r) {
  ojson j;
  j["n"] = r.pids.size();
  j["norm_stats"] = {{"sigma_x_m", r.norm.sigma_x}, {"sigma_y_m", r.norm.sigma_y}};
  j["sigma"] = r.sigma;
  j["single_cluster_fallback"] = r.single_cluster_fallback;
  j["k"] = r.assignment.k;
  j["best_k"] = r.silhouette.best_k;
  ojson per_k = ojson::object();
  for (const auto& [k, v] : r.silhouette.per_k) per_k[std::to_string(k)] = v;
  j["per_k"] = std::move(per_k);
  ojson pts = ojson::array();
  for (std::size_t i = 0; i < r.pids.size(); ++i) {
    const auto& f = r.features[i];
    ojson p;
    p["pid"] = r.pids[i];
    p["label"] = r.assignment.labels[i];
    p["feature"] = {f.dx, f.dy, f.cos_t, f.sin_t};
    if (i < r.silhouette.a.size()) {
      p["a"] = r.silhouette.a[i];
      p["b"] = r.silhouette.b[i];
    }
    pts.push_back(std::move(p));
  }
  j["points"] = std::move(pts);
  return j;
}

inline ojson stage3_json(const Stage3Report& r) {
  ojson j;
  j["tau"] = r.tau;
  j["tau_calibrated"] = r.tau_calibrated;
  j["sigma_d"] = r.sigma_d;
  j["ratio"] = r.ratio;
  j["budget_total"] = r.selection.budget_total;
  j["budget_used"] = r.selection.budget_used;
  j["selected"] = r.selection.selected;
  ojson clusters = ojson::array();
  for (const auto& c : r.selection.clusters) {
    ojson cj;
    cj["cluster"] = c.cluster;
    cj["pids"] = c.graph.nodes();
    cj["edge_count"] = c.graph.edge_count();
    cj["allocated"] = c.allocated;
    cj["redistributed"] = c.redistributed;
    cj["selected"] = c.selected;
    clusters.push_back(std::move(cj));
  }
  j["clusters"] = std::move(clusters);
  ojson kp = ojson::object();
  for (const auto& [pid, n] : r.keypoint_counts) kp[std::to_string(pid)] = n;
  j["keypoint_counts"] = std::move(kp);
  ojson ex = ojson::array();
  for (const auto& e : r.excluded) ex.push_back({{"pid", e.pid}, {"path", e.path}, {"reason", e.reason}});
  j["excluded"] = std::move(ex);
  j["copied"] = r.copied;
  return j;
}

inline ojson summary_json(const RunReport& r) {
  ojson j;
  j["version"] = kReportVersion;
  j["stages"] = r.stages;
  ojson counts;
  counts["input"] = r.count_input();
  counts["filtered"] = r.count_filtered();
  if (r.stage2) counts["clustered"] = r.stage2->pids.size();
  if (r.stage3) {
    std::size_t considered = 0;
    for (const auto& c : r.stage3->selection.clusters) considered += c.graph.size();
    counts["described"] = considered;
    counts["selected"] = *r.count_selected();
  }
  j["counts"] = std::move(counts);
  if (r.stage2) j["k"] = r.stage2->assignment.k;
  if (r.stage3) {
    j["tau"] = r.stage3->tau;
    j["selected"] = r.stage3->selection.selected;
  }
  if (r.coverage) {
    j["angular_coverage"] = {{"ang_inter", r.coverage->ang_inter},
                             {"sectors", r.coverage->sectors},
                             {"covered", r.coverage->covered},
                             {"fraction", r.coverage->fraction}};
  } else {
    j["angular_coverage"] = nullptr;
  }
  j["warnings"] = r.warnings;
  ojson files = ojson::array({"stage1_report.json"});
  if (r.stage2) files.push_back("stage2_report.json");
  if (r.stage3) files.push_back("stage3_report.json");
  j["reports"] = std::move(files);
  return j;
}

inline ojson timings_json(const StageTimings& t) {
  ojson j;
  const auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("stage1_ms", t.stage1_ms);
  put("stage2_ms", t.stage2_ms);
  put("stage3_ms", t.stage3_ms);
  return j;
}

}  // namespace triselect
