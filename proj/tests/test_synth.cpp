#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"
#include "triselect/matching.hpp"
#include "triselect/prefilter.hpp"
#include "triselect/sift.hpp"
#include "triselect/synth.hpp"

using namespace triselect;
namespace fs = std::filesystem;

namespace {

ScenarioConfig mixed_config(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.n_images = 200;
  cfg.n_clusters = 5;
  cfg.violation_rates = {{Filter::Format, 0.05}, {Filter::Time, 0.05}, {Filter::Gps, 0.05},
                         {Filter::Altitude, 0.05}, {Filter::Resolution, 0.05}, {Filter::TaskMismatch, 0.02}};
  cfg.multi_violation_rate = 0.25;
  cfg.duplicate_group_sizes = {3, 2};
  return cfg;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::ConstraintViolation;
}

double angle_gap(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2 * std::numbers::pi);
  return std::min(d, 2 * std::numbers::pi - d);
}

}  // namespace

TEST(Scenario, CleanConfigKeepsEverything) {
  ScenarioConfig cfg;
  cfg.seed = 4;
  const auto sc = generate_scenario(cfg);
  ASSERT_EQ(sc.records.size(), 100u);
  const auto res = preselect(sc.records, sc.task);
  EXPECT_EQ(res.kept.size(), 100u);
  EXPECT_EQ(res.report.reduction_rate, 0.0);
}

TEST(Scenario, PlantedCountGivesExactReduction) {
  ScenarioConfig cfg;
  cfg.n_images = 137;
  cfg.violation_counts = {{Filter::Format, 10}, {Filter::Gps, 10}, {Filter::Altitude, 10}, {Filter::Time, 10}};
  const auto sc = generate_scenario(cfg);
  const auto res = preselect(sc.records, sc.task);
  EXPECT_EQ(res.kept.size(), 97u);
  EXPECT_NEAR(res.report.reduction_rate, 0.292, 5e-4);
}

TEST(Scenario, SameSeedSameBytes) {
  const auto a = generate_scenario(mixed_config(9));
  const auto b = generate_scenario(mixed_config(9));
  EXPECT_EQ(a.manifest_text, b.manifest_text);
  EXPECT_EQ(truth_to_json(a.truth, mixed_config(9)).dump(), truth_to_json(b.truth, mixed_config(9)).dump());
  EXPECT_NE(generate_scenario(mixed_config(10)).manifest_text, a.manifest_text);
}

TEST(Scenario, ManifestTextParsesBackToRecords) {
  const auto sc = generate_scenario(mixed_config(3));
  const auto m = parse_manifest(sc.manifest_text);
  EXPECT_EQ(m.unknown_key_warnings, 0u);
  ASSERT_EQ(m.records.size(), sc.records.size());
  for (std::size_t i = 0; i < sc.records.size(); ++i) {
    EXPECT_EQ(m.records[i].pid, sc.records[i].pid);
    EXPECT_EQ(m.records[i].format, sc.records[i].format);
    EXPECT_EQ(m.records[i].time, sc.records[i].time);
    EXPECT_EQ(m.records[i].path, sc.records[i].path);
  }
  EXPECT_EQ(parse_task_spec(serialize_task_spec(sc.task)).tid, sc.task.tid);
}

TEST(Scenario, TruthAgreesWithIndependentRecheck) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cfg = mixed_config(seed);
    const auto sc = generate_scenario(cfg);
    ASSERT_EQ(sc.truth.entries.size(), sc.records.size());
    const auto res = preselect(sc.records, sc.task);
    std::map<std::uint64_t, FilterSet> failed;
    for (const auto& r : res.report.rejected) failed[r.pid] = r.failed;
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < sc.records.size(); ++i) {
      const auto& r = sc.records[i];
      const auto& t = sc.truth.at(r.pid);
      EXPECT_EQ(t.pid, r.pid);
      EXPECT_EQ(failed.contains(r.pid) ? failed[r.pid] : FilterSet{}, t.violations) << "pid " << r.pid;
      if (t.duplicate_group >= 0) groups[t.duplicate_group].push_back(i);
      if (!t.violations.empty()) continue;
      // Clean records sit in their sector and face the target.
      const double sector = geo_bearing(sc.task.whr, r.locat);
      EXPECT_LT(angle_gap(sector, *t.rotation), 0.3);
      EXPECT_LT(angle_gap(*r.heading, geo_bearing(r.locat, sc.task.whr)), 0.3);
    }
    ASSERT_EQ(groups.size(), 2u);
    EXPECT_EQ(groups[0].size(), 3u);
    EXPECT_EQ(groups[1].size(), 2u);
    for (const auto& [g, members] : groups) {
      for (std::size_t i : members) {
        EXPECT_EQ(sc.records[i].locat, sc.records[members[0]].locat);
        EXPECT_EQ(sc.records[i].heading, sc.records[members[0]].heading);
        EXPECT_TRUE(sc.truth.entries[i].violations.empty());
      }
    }
  }
}

TEST(Scenario, PlantedClustersAreRecoverable) {
  for (int k : {2, 3, 5}) {
    ScenarioConfig cfg;
    cfg.seed = 100 + static_cast<std::uint64_t>(k);
    cfg.n_clusters = k;
    cfg.n_images = 12 * static_cast<std::size_t>(k);
    const auto sc = generate_scenario(cfg);
    const auto f = build_features(sc.records, sc.task, compute_norm_stats(sc.records, sc.task));
    SelectKOptions opt;
    opt.seed = 1;
    const auto res = select_k(f, opt);
    std::vector<int> truth;
    for (const auto& e : sc.truth.entries) truth.push_back(e.cluster);
    EXPECT_EQ(res.report.best_k, k);
    EXPECT_DOUBLE_EQ(oracle::adjusted_rand_index(truth, res.assignment.labels), 1.0);
  }
}

TEST(Scenario, TurntableIsEvenlySpacedAndClean) {
  ScenarioConfig cfg;
  cfg.rotation_steps = 72;
  const auto sc = generate_scenario(cfg);
  ASSERT_EQ(sc.records.size(), 72u);
  for (std::size_t i = 0; i < 72; ++i) {
    EXPECT_NEAR(*sc.truth.entries[i].rotation, 2 * std::numbers::pi * static_cast<double>(i) / 72.0, 1e-12);
    EXPECT_EQ(sc.truth.entries[i].cluster, 0);
  }
  EXPECT_EQ(preselect(sc.records, sc.task).kept.size(), 72u);
  cfg.violation_rates = {{Filter::Time, 0.1}};
  EXPECT_EQ(kind_of([&] { generate_scenario(cfg); }), ErrorKind::ConfigInvalid);
}

TEST(Scenario, InvalidConfigs) {
  const auto bad = [](auto mutate) {
    ScenarioConfig cfg;
    mutate(cfg);
    return kind_of([&] { generate_scenario(cfg); });
  };
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.n_clusters = 0; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.violation_rates[Filter::Gps] = 1.5; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.n_images = 2; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.ring_radius_m = 200; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.violation_counts[Filter::Format] = 101; }), ErrorKind::ConfigInvalid);
  EXPECT_EQ(bad([](ScenarioConfig& c) { c.duplicate_group_sizes = {90}; }), ErrorKind::ConfigInvalid);
}

TEST(ScenarioJson, ParsesAndRejects) {
  const auto cfg = scenario_from_json(nlohmann::json::parse(
      R"({"seed": 7, "n_images": 30, "n_clusters": 3, "violation_rates": {"gps": 0.1}, "duplicate_group_sizes": [2]})"));
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.n_images, 30u);
  EXPECT_EQ(cfg.violation_rates.at(Filter::Gps), 0.1);
  EXPECT_EQ(cfg.duplicate_group_sizes, std::vector<std::size_t>{2});
  for (const char* text : {R"({"violation_rates": {"color": 0.1}})", R"({"n_images": "many"})",
                           R"({"n_clusters": 0})", R"({"image_noise": 0.5})"}) {
    EXPECT_EQ(kind_of([&] { scenario_from_json(nlohmann::json::parse(text)); }), ErrorKind::ConfigInvalid) << text;
  }
}

TEST(ScenarioFiles, WritesAllArtifacts) {
  const auto dir = fs::temp_directory_path() / "tri_select_synth_write";
  fs::remove_all(dir);
  ScenarioConfig cfg;
  cfg.n_images = 6;
  cfg.n_clusters = 2;
  cfg.image_size = 48;
  const auto sc = write_scenario(cfg, dir);
  EXPECT_TRUE(fs::exists(dir / "task.txt"));
  EXPECT_TRUE(fs::exists(dir / "truth.json"));
  std::ifstream in(dir / "manifest.jsonl");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  EXPECT_EQ(text, sc.manifest_text);
  for (const auto& r : sc.records) {
    const auto img = load_image(dir / *r.path);
    EXPECT_EQ(img.width(), 48);
    EXPECT_LT(mean_abs_diff(img, render_record(cfg, sc.truth.at(r.pid))), 1.0 / 255.0);
  }
  fs::remove_all(dir);
}

TEST(Render, Deterministic) {
  EXPECT_EQ(render_view(5, Pose{0.0, 1.0, 0.0}), render_view(5, Pose{0.0, 1.0, 0.0}));
  EXPECT_EQ(render_view(5, Pose{0.7, 1.3, 0.05}), render_view(5, Pose{0.7, 1.3, 0.05}));
  EXPECT_GT(mean_abs_diff(render_view(5, Pose{0.0, 1.0, 0.0}), render_view(6, Pose{0.0, 1.0, 0.0})), 0.01);
}

TEST(Render, FullTurnIsPeriodic) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EXPECT_LT(mean_abs_diff(render_view(seed, Pose{0.0, 1.0, 0.0}), render_view(seed, Pose{2 * std::numbers::pi, 1.0, 0.0})),
              1e-3);
  }
}

TEST(Render, PoseAndSizeLimits) {
  EXPECT_EQ(kind_of([] { render_view(1, Pose{0.0, 2.5, 0.0}); }), ErrorKind::PoseOutOfRange);
  EXPECT_EQ(kind_of([] { render_view(1, Pose{0.0, 0.4, 0.0}); }), ErrorKind::PoseOutOfRange);
  EXPECT_EQ(kind_of([] { render_view(1, Pose{0.0, 1.0, 0.2}); }), ErrorKind::PoseOutOfRange);
  EXPECT_EQ(kind_of([] { render_view(1, Pose{std::nan(""), 1.0, 0.0}); }), ErrorKind::PoseOutOfRange);
  EXPECT_EQ(kind_of([] { render_view(1, Pose{}, 8); }), ErrorKind::ImageTooSmall);
  EXPECT_NO_THROW(render_view(1, Pose{0.0, 0.5, 0.1}));
  EXPECT_NO_THROW(render_view(1, Pose{0.0, 2.0, 0.0}));
}

TEST(Render, QuarterTurnResemblesItsSceneMoreThanAnother) {
  int ordered = 0;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    const auto a = extract_features(render_view(1000 + s, Pose{0.0, 1.0, 0.0}));
    const auto turned = extract_features(render_view(1000 + s, Pose{std::numbers::pi / 2, 1.0, 0.0}));
    const auto other = extract_features(render_view(5000 + s, Pose{0.0, 1.0, 0.0}));
    ordered += pair_similarity(a, turned, 0.4, 0.8) > pair_similarity(a, other, 0.4, 0.8);
  }
  EXPECT_GE(ordered, 95);
}

TEST(Coil, ListsViewsByObjectAndAngle) {
  const auto dir = fs::temp_directory_path() / "tri_select_coil_list";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* name : {"obj66__0.png", "obj66__355.png", "obj66__10.png", "obj1__5.png", "obj66__0.txt", "readme"}) {
    std::ofstream(dir / name) << "x";
  }
  const auto all = list_coil_views(dir);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[0].pid, 1005u);
  const auto one = list_coil_views(dir, 66);
  ASSERT_EQ(one.size(), 3u);
  EXPECT_EQ(one[0].pid, 66000u);
  EXPECT_EQ(one[1].angle_deg, 10);
  EXPECT_EQ(one[2].pid, 66355u);
  EXPECT_EQ(one[2].object, 66);
  fs::remove_all(dir);
}
