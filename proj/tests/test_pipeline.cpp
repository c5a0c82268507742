#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <string>

#include "triselect/pipeline.hpp"
#include "triselect/synth.hpp"

using namespace triselect;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("triselect_pipeline_{}_{}", name, ::getpid());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ScenarioConfig small_scenario(std::uint64_t seed = 7) {
  ScenarioConfig c;
  c.seed = seed;
  c.n_images = 30;
  c.n_clusters = 3;
  c.image_size = 96;
  c.violation_counts = {{Filter::Gps, 3}, {Filter::Time, 2}, {Filter::Format, 1}};
  return c;
}

PipelineConfig config_for(const fs::path& data, const fs::path& out) {
  PipelineConfig cfg;
  cfg.task_path = data / "task.txt";
  cfg.manifest_path = data / "manifest.jsonl";
  cfg.image_root = data;
  cfg.out_dir = out;
  cfg.budget = 6;
  cfg.seed = 3;
  return cfg;
}

// Shared scenario, written once for the whole suite.
class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch_dir("suite"));
    scenario_ = new Scenario(write_scenario(small_scenario(), *root_ / "data"));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete scenario_;
    delete root_;
  }
  static fs::path data() { return *root_ / "data"; }
  static fs::path out(const std::string& name) { return *root_ / name; }

  static fs::path* root_;
  static Scenario* scenario_;
};
fs::path* PipelineTest::root_ = nullptr;
Scenario* PipelineTest::scenario_ = nullptr;

int run_cli(const std::string& args) {
  const char* bin = std::getenv("TRI_SELECT_BIN");
  if (bin == nullptr) return -1;
  const std::string cmd = fmt::format("\"{}\" {} >/dev/null 2>&1", bin, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(PipelineTest, FlowIsConservedThroughTheStages) {
  auto cfg = config_for(data(), out("flow"));
  const RunReport rep = run_pipeline(cfg);

  std::set<std::uint64_t> input;
  for (const auto& r : scenario_->records) input.insert(r.pid);
  const std::set<std::uint64_t> kept(rep.kept_pids.begin(), rep.kept_pids.end());
  for (auto p : kept) EXPECT_TRUE(input.count(p));
  EXPECT_EQ(kept.size(), 24u);
  EXPECT_EQ(rep.count_input(), 30u);
  EXPECT_EQ(rep.count_filtered(), 24u);

  ASSERT_TRUE(rep.stage2);
  EXPECT_EQ(std::set<std::uint64_t>(rep.stage2->pids.begin(), rep.stage2->pids.end()), kept);
  EXPECT_EQ(rep.stage2->assignment.k, 3);

  ASSERT_TRUE(rep.stage3);
  const auto& sel = rep.stage3->selection.selected;
  EXPECT_LE(sel.size(), cfg.budget);
  EXPECT_GE(sel.size(), 1u);
  std::set<std::uint64_t> members;
  for (const auto& c : rep.stage3->selection.clusters) {
    for (auto p : c.graph.nodes()) members.insert(p);
    for (auto p : c.selected) EXPECT_TRUE(std::count(c.graph.nodes().begin(), c.graph.nodes().end(), p));
  }
  for (auto p : sel) EXPECT_TRUE(members.count(p));
  for (auto p : members) EXPECT_TRUE(kept.count(p));

  // Copied files mirror the selection.
  ASSERT_EQ(rep.stage3->copied.size(), sel.size());
  for (const auto& rel : rep.stage3->copied) EXPECT_TRUE(fs::exists(cfg.out_dir / rel)) << rel;

  // Every report parses and the summary counts agree.
  for (const char* f : {"stage1_report.json", "stage2_report.json", "stage3_report.json", "report.json", "timings.json"}) {
    EXPECT_TRUE(nlohmann::json::accept(slurp(cfg.out_dir / f))) << f;
  }
  const auto summary = nlohmann::json::parse(slurp(cfg.out_dir / "report.json"));
  EXPECT_EQ(summary["counts"]["input"], 30);
  EXPECT_EQ(summary["counts"]["filtered"], 24);
  EXPECT_EQ(summary["counts"]["selected"], sel.size());
  EXPECT_EQ(summary["selected"].get<std::vector<std::uint64_t>>(), sel);
}

TEST_F(PipelineTest, AngularCoverageCountsOccupiedSectors) {
  auto cfg = config_for(data(), out("coverage"));
  const RunReport rep = run_pipeline(cfg);
  ASSERT_TRUE(rep.coverage);
  EXPECT_EQ(rep.coverage->sectors, 8);
  EXPECT_GE(rep.coverage->covered, 1);
  EXPECT_LE(rep.coverage->covered, std::min<int>(8, static_cast<int>(rep.stage3->selection.selected.size())));
  EXPECT_DOUBLE_EQ(rep.coverage->fraction, rep.coverage->covered / 8.0);
}

TEST_F(PipelineTest, StageOneOnlyWritesOnlyStageOneOutput) {
  auto cfg = config_for(data(), out("s1"));
  cfg.stages = 1;
  const RunReport rep = run_pipeline(cfg);
  EXPECT_FALSE(rep.stage2);
  EXPECT_FALSE(rep.stage3);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "stage1_report.json"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / "stage2_report.json"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / "stage3_report.json"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / "selected"));
  const auto summary = nlohmann::json::parse(slurp(cfg.out_dir / "report.json"));
  EXPECT_FALSE(summary.contains("k"));
  EXPECT_FALSE(summary["counts"].contains("selected"));
  EXPECT_EQ(summary["reports"].size(), 1u);
}

TEST_F(PipelineTest, StagesOneTwoStopBeforeSelection) {
  auto cfg = config_for(data(), out("s12"));
  cfg.stages = 2;
  const RunReport rep = run_pipeline(cfg);
  EXPECT_TRUE(rep.stage2);
  EXPECT_FALSE(rep.stage3);
  EXPECT_TRUE(fs::exists(cfg.out_dir / "stage2_report.json"));
  EXPECT_FALSE(fs::exists(cfg.out_dir / "stage3_report.json"));
}

TEST(Plots, NeedTheClusteringStage) {
  RunReport rep;
  rep.stages = 1;
  try {
    emit_plots(rep, fs::temp_directory_path());
    FAIL() << "expected MissingStage";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingStage);
  }
}

TEST(Plots, TallestBarIsTheBestK) {
  SilhouetteReport s;
  s.per_k = {{2, 0.4}, {3, 0.6}, {4, 0.7}};
  s.best_k = 4;
  const std::string svg = silhouette_svg(s);
  EXPECT_EQ(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);

  static const std::regex bar(R"re(<rect x="[^"]+" y="[^"]+" width="[^"]+" height="([^"]+)" fill="([^"]+)"><title>k=(\d+))re");
  int tallest_k = 0;
  double tallest = -1;
  std::string highlighted;
  int bars = 0;
  for (std::sregex_iterator it(svg.begin(), svg.end(), bar), end; it != end; ++it) {
    ++bars;
    const double h = std::stod((*it)[1].str());
    const int k = std::stoi((*it)[3].str());
    if (h > tallest) tallest = h, tallest_k = k;
    if ((*it)[2].str() == "#d62728") highlighted = (*it)[3].str();
  }
  EXPECT_EQ(bars, 3);
  EXPECT_EQ(tallest_k, 4);
  EXPECT_EQ(highlighted, "4");
}

TEST_F(PipelineTest, PlotsAreByteStableAcrossRuns) {
  auto a = config_for(data(), out("plots_a"));
  auto b = config_for(data(), out("plots_b"));
  a.plots = b.plots = true;
  a.stages = b.stages = 2;
  run_pipeline(a);
  run_pipeline(b);
  for (const char* f : {"silhouette.svg", "clusters.svg"}) {
    const std::string x = slurp(a.out_dir / f);
    ASSERT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b.out_dir / f)) << f;
  }
}

TEST_F(PipelineTest, RepeatedRunsGiveIdenticalReports) {
  auto cfg = config_for(data(), out("idem"));
  run_pipeline(cfg);
  std::map<std::string, std::string> first;
  for (const char* f : {"stage1_report.json", "stage2_report.json", "stage3_report.json", "report.json"}) {
    first[f] = slurp(cfg.out_dir / f);
  }
  run_pipeline(cfg);  // same out dir, overwritten in place
  for (const auto& [f, text] : first) EXPECT_EQ(text, slurp(cfg.out_dir / f)) << f;
}

TEST_F(PipelineTest, ThreadCountDoesNotChangeReports) {
  auto one = config_for(data(), out("t1"));
  auto three = config_for(data(), out("t3"));
  three.threads = 3;
  run_pipeline(one);
  run_pipeline(three);
  for (const char* f : {"stage1_report.json", "stage2_report.json", "stage3_report.json", "report.json"}) {
    EXPECT_EQ(slurp(one.out_dir / f), slurp(three.out_dir / f)) << f;
  }
}

TEST_F(PipelineTest, DescriptorCacheDoesNotChangeTheSelection) {
  auto plain = config_for(data(), out("nocache"));
  auto cached = config_for(data(), out("cache"));
  cached.cache_dir = out("cache_store");
  const auto a = run_pipeline(plain);
  const auto b = run_pipeline(cached);  // cold
  const auto c = run_pipeline(cached);  // warm
  EXPECT_EQ(a.stage3->selection.selected, b.stage3->selection.selected);
  EXPECT_EQ(a.stage3->selection.selected, c.stage3->selection.selected);
  EXPECT_FALSE(fs::is_empty(*cached.cache_dir));
}

TEST(PipelineErrors, UndecodableImageIsExcludedNotFatal) {
  const fs::path root = scratch_dir("corrupt");
  auto sc = write_scenario(small_scenario(11), root / "data");
  const auto& victim = sc.records.front();
  ASSERT_TRUE(sc.truth.entries.front().violations.empty());
  std::ofstream(root / "data" / *victim.path, std::ios::binary | std::ios::trunc) << "not an image";

  auto cfg = config_for(root / "data", root / "out");
  const RunReport rep = run_pipeline(cfg);
  ASSERT_TRUE(rep.stage3);
  ASSERT_EQ(rep.stage3->excluded.size(), 1u);
  EXPECT_EQ(rep.stage3->excluded[0].pid, victim.pid);
  EXPECT_EQ(rep.stage3->excluded[0].path, *victim.path);
  const auto& sel = rep.stage3->selection.selected;
  EXPECT_EQ(std::count(sel.begin(), sel.end(), victim.pid), 0);
  bool warned = false;
  for (const auto& w : rep.warnings) warned = warned || w.find(std::to_string(victim.pid)) != std::string::npos;
  EXPECT_TRUE(warned);
  fs::remove_all(root);
}

TEST(PipelineErrors, EverythingFilteredIsAnEmptyStage) {
  const fs::path root = scratch_dir("empty");
  auto c = small_scenario(5);
  c.n_images = 6;
  c.violation_counts = {{Filter::Gps, 6}};
  write_scenario(c, root / "data", false);
  auto cfg = config_for(root / "data", root / "out");
  cfg.stages = 2;
  try {
    run_pipeline(cfg);
    FAIL() << "expected EmptyStageInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyStageInput);
  }
  // Stage I alone still reports the full rejection.
  cfg.stages = 1;
  const auto rep = run_pipeline(cfg);
  EXPECT_EQ(rep.stage1.kept_count, 0u);
  EXPECT_DOUBLE_EQ(rep.stage1.reduction_rate, 1.0);
  fs::remove_all(root);
}

TEST(PipelineErrors, InvalidConfigurationIsRejected) {
  const auto kind_of = [](auto mutate) {
    PipelineConfig cfg;
    mutate(cfg);
    try {
      cfg.validate();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::EmptyStageInput;  // sentinel: accepted
  };
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.stages = 4; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.budget = 0; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.tau = 1.5; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.tau = 0.0; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.ratio = 0.0; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.sigma_d = -1.0; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.k_min = 1; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.k_min = 4, c.k_max = 3; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(kind_of([](PipelineConfig& c) { c.tau = std::nullopt; }), ErrorKind::EmptyStageInput);
}

TEST_F(PipelineTest, RotationSetEndToEndSelectsTheBudget) {
  ScenarioConfig c;
  c.seed = 4;
  c.rotation_steps = 72;
  const fs::path dir = out("turntable");
  auto sc = write_scenario(c, dir);

  PipelineConfig cfg = config_for(dir, dir / "out");
  cfg.budget = 10;
  cfg.tau = std::nullopt;
  // One object: describe everything as a single group.
  const ClusterAssignment one{1, std::vector<int>(sc.records.size(), 0)};
  const Stage3Report r = run_stage3(sc.records, one, cfg);
  EXPECT_TRUE(r.tau_calibrated);
  EXPECT_EQ(r.selection.selected.size(), 10u);
  EXPECT_TRUE(r.excluded.empty());
}

// --- command line ---------------------------------------------------------

class Cli : public PipelineTest {
 protected:
  void SetUp() override {
    if (std::getenv("TRI_SELECT_BIN") == nullptr) GTEST_SKIP() << "TRI_SELECT_BIN not set";
  }
  static std::string base(const fs::path& manifest, const std::string& out_name) {
    return fmt::format("run --task {} --manifest {} --images {} --out {}", (data() / "task.txt").string(), manifest.string(),
                       data().string(), out(out_name).string());
  }
};

TEST_F(Cli, SuccessExitsZero) {
  EXPECT_EQ(run_cli(base(data() / "manifest.jsonl", "cli_ok") + " --budget 4 --threads 2 --plots"), 0);
  EXPECT_TRUE(fs::exists(out("cli_ok") / "report.json"));
  EXPECT_TRUE(fs::exists(out("cli_ok") / "silhouette.svg"));
  EXPECT_EQ(run_cli(base(data() / "manifest.jsonl", "cli_auto") + " --tau auto --stages 123"), 0);
}

TEST_F(Cli, ConfigurationErrorsExitTwo) {
  const auto m = data() / "manifest.jsonl";
  EXPECT_EQ(run_cli(base(m, "cli_e1") + " --tau 1.5"), 2);
  EXPECT_EQ(run_cli(base(m, "cli_e2") + " --tau nope"), 2);
  EXPECT_EQ(run_cli(base(m, "cli_e3") + " --stages 13"), 2);
  EXPECT_EQ(run_cli(base(m, "cli_e4") + " --budget 0"), 2);
  EXPECT_EQ(run_cli(base(m, "cli_e5") + " --no-such-flag"), 2);
  EXPECT_EQ(run_cli("run --manifest x"), 2);
  EXPECT_EQ(run_cli(fmt::format("synth --config {} --out {}", (data() / "missing.json").string(), out("cli_s").string())), 2);
}

TEST_F(Cli, InputErrorsExitThree) {
  EXPECT_EQ(run_cli(base(data() / "does_not_exist.jsonl", "cli_i1")), 3);
  const fs::path bad = out("bad_manifest.jsonl");
  std::ofstream(bad) << "{\"pid\": 1, \"tid\": \n";
  EXPECT_EQ(run_cli(base(bad, "cli_i2")), 3);
}

TEST_F(Cli, EmptyStageExitsFour) {
  const fs::path dir = out("cli_empty_data");
  auto c = small_scenario(5);
  c.n_images = 6;
  c.violation_counts = {{Filter::Gps, 6}};
  write_scenario(c, dir, false);
  const std::string args = fmt::format("run --task {} --manifest {} --images {} --out {} --stages 12", (dir / "task.txt").string(),
                                       (dir / "manifest.jsonl").string(), dir.string(), out("cli_empty").string());
  EXPECT_EQ(run_cli(args), 4);
}

TEST_F(Cli, SynthWritesAScenario) {
  const fs::path cfg = out("synth.json");
  std::ofstream(cfg) << R"({"seed": 9, "n_images": 12, "n_clusters": 2, "image_size": 64})";
  EXPECT_EQ(run_cli(fmt::format("synth --config {} --out {}", cfg.string(), out("cli_synth").string())), 0);
  EXPECT_TRUE(fs::exists(out("cli_synth") / "manifest.jsonl"));
  EXPECT_TRUE(fs::exists(out("cli_synth") / "images" / "000012.png"));
}
