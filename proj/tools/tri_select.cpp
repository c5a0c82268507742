// tri-select: three-stage image subset selection.
//
//   tri-select run   --task T --manifest M --images DIR --out DIR [options]
//   tri-select synth --config C --out DIR
//
// Exit status: 0 success, 2 configuration, 3 input, 4 pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "triselect/pipeline.hpp"
#include "triselect/synth.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitPipeline = 4;

int exit_code(triselect::ErrorKind kind) {
  switch (triselect::classify(kind)) {
    case triselect::ErrorClass::Config: return kExitConfig;
    case triselect::ErrorClass::Input: return kExitInput;
    case triselect::ErrorClass::Pipeline: return kExitPipeline;
  }
  return kExitPipeline;
}

int stages_from(const std::string& s) {
  if (s == "1") return 1;
  if (s == "12") return 2;
  if (s == "123") return 3;
  throw triselect::Error(triselect::ErrorKind::ConfigInvalid, fmt::format("--stages must be 1, 12 or 123, got '{}'", s));
}

std::optional<double> tau_from(const std::string& s) {
  if (s == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw triselect::Error(triselect::ErrorKind::ConfigInvalid, fmt::format("--tau must be a number or 'auto', got '{}'", s));
}

void print_summary(const triselect::RunReport& rep) {
  fmt::print("stage 1: {} -> {} records (reduction {:.3f})\n", rep.stage1.original_count, rep.stage1.kept_count,
             rep.stage1.reduction_rate);
  if (rep.stage2) {
    fmt::print("stage 2: k = {}{}\n", rep.stage2->assignment.k, rep.stage2->single_cluster_fallback ? " (fallback)" : "");
  }
  if (rep.stage3) {
    const auto& sel = rep.stage3->selection;
    fmt::print("stage 3: {} selected of budget {} (tau {}{}), {} excluded\n", sel.budget_used, sel.budget_total,
               rep.stage3->tau, rep.stage3->tau_calibrated ? ", calibrated" : "", rep.stage3->excluded.size());
  }
  for (const auto& w : rep.warnings) fmt::print(stderr, "warning: {}\n", w);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage selection of representative images from crowdsensed corpora"};
  app.require_subcommand(1);

  triselect::PipelineConfig cfg;
  std::string stages = "123";
  std::string tau = "0.5";
  double sigma = 0.0;
  std::string cache;
  auto* run = app.add_subcommand("run", "filter, cluster and select images");
  run->add_option("--task", cfg.task_path, "task specification file")->required();
  run->add_option("--manifest", cfg.manifest_path, "NDJSON image manifest")->required();
  run->add_option("--images", cfg.image_root, "image root directory")->required();
  run->add_option("--out", cfg.out_dir, "output directory")->required();
  run->add_option("--budget", cfg.budget, "total number of images to select")->capture_default_str();
  run->add_option("--tau", tau, "similarity threshold in (0, 1], or 'auto'")->capture_default_str();
  run->add_option("--sigma", sigma, "RBF width for clustering (default: median pairwise distance)");
  run->add_option("--sigma-d", cfg.sigma_d, "descriptor-distance scale")->capture_default_str();
  run->add_option("--ratio", cfg.ratio, "nearest-neighbor ratio test")->capture_default_str();
  run->add_option("--k-min", cfg.k_min, "smallest cluster count")->capture_default_str();
  run->add_option("--k-max", cfg.k_max, "largest cluster count (default: min(10, n-1))");
  run->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  run->add_option("--stages", stages, "stages to run: 1, 12 or 123")->capture_default_str();
  run->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
  run->add_option("--cache", cache, "descriptor cache directory");
  run->add_flag("--plots", cfg.plots, "write silhouette.svg and clusters.svg");

  std::string synth_config;
  std::string synth_out;
  bool no_images = false;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario");
  synth->add_option("--config", synth_config, "scenario JSON")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_flag("--no-images", no_images, "skip rendering images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      cfg.stages = stages_from(stages);
      cfg.tau = tau_from(tau);
      if (run->count("--sigma") > 0) cfg.sigma = sigma;
      if (!cache.empty()) cfg.cache_dir = cache;
      print_summary(triselect::run_pipeline(cfg));
      return 0;
    }
    std::ifstream in(synth_config);
    if (!in) throw triselect::Error(triselect::ErrorKind::ConfigInvalid, fmt::format("cannot read {}", synth_config));
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw triselect::Error(triselect::ErrorKind::ConfigInvalid, e.what());
    }
    const auto sc = triselect::write_scenario(triselect::scenario_from_json(j), synth_out, !no_images);
    fmt::print("wrote {} records to {}\n", sc.records.size(), synth_out);
    return 0;
  } catch (const triselect::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInput;
  }
}
