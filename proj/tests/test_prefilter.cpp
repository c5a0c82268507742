#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "triselect/prefilter.hpp"
#include "triselect/synth.hpp"

using namespace triselect;

namespace {

TaskSpec base_task() {
  TaskSpec t;
  t.tid = 1;
  t.formats = {".jpg", ".jpeg"};
  t.whr = GeoPoint(34.246, 108.904);
  t.whn = {Timestamp::parse("202403141000"), Timestamp::parse("202403141800")};
  t.alt_range = ClosedInterval<double>{0.0, 20.0};
  t.d_max = 50.0;
  return t;
}

ImageRecord base_record(std::uint64_t pid) {
  ImageRecord r;
  r.pid = pid;
  r.tid = 1;
  r.wid = 2;
  r.format = ".jpg";
  r.time = Timestamp::parse("202403141530");
  r.locat = GeoPoint(34.2461, 108.9041);
  r.heig = 10.2;
  r.resol = Resolution(1920, 1080);
  return r;
}

// Each predicate recomputed from first principles.
FilterSet oracle(const ImageRecord& r, const TaskSpec& t) {
  FilterSet f;
  std::string fmt = r.format;
  std::transform(fmt.begin(), fmt.end(), fmt.begin(), [](unsigned char c) { return std::tolower(c); });
  if (!t.formats.contains(fmt)) f.insert(Filter::Format);
  const auto ts = r.time.to_string();
  if (ts < t.whn.lo.to_string() || ts > t.whn.hi.to_string()) f.insert(Filter::Time);
  const double p1 = r.locat.lat() * std::numbers::pi / 180.0;
  const double p2 = t.whr.lat() * std::numbers::pi / 180.0;
  const double dl = (t.whr.lon() - r.locat.lon()) * std::numbers::pi / 180.0;
  const double h = std::pow(std::sin((p2 - p1) / 2), 2) + std::cos(p1) * std::cos(p2) * std::pow(std::sin(dl / 2), 2);
  const double d = 2 * 6371000.0 * std::asin(std::sqrt(h));
  if (d < t.d_min || d > t.d_max) f.insert(Filter::Gps);
  if (t.alt_range && (r.heig < t.alt_range->lo || r.heig > t.alt_range->hi)) f.insert(Filter::Altitude);
  if (std::min(r.resol.width(), r.resol.height()) < t.resol_min) f.insert(Filter::Resolution);
  if (r.tid != t.tid) f.insert(Filter::TaskMismatch);
  return f;
}

}  // namespace

TEST(FilterFormat, CaseInsensitiveMembership) {
  auto t = base_task();
  auto r = base_record(1);
  EXPECT_TRUE(filter_format(r, t));
  t.formats = {".png"};
  r.format = ".PNG";
  EXPECT_TRUE(filter_format(r, t));
  t.formats = {".jpg"};
  r.format = ".gif";
  EXPECT_FALSE(filter_format(r, t));
}

TEST(FilterSpatiotemporal, ClosedTimeWindow) {
  const auto t = base_task();
  auto r = base_record(1);
  EXPECT_TRUE(filter_spatiotemporal(r, t).time_ok);
  r.time = t.whn.lo;
  EXPECT_TRUE(filter_spatiotemporal(r, t).time_ok);
  r.time = t.whn.hi;
  EXPECT_TRUE(filter_spatiotemporal(r, t).time_ok);
  r.time = Timestamp::parse("202403141801");
  EXPECT_FALSE(filter_spatiotemporal(r, t).time_ok);
}

TEST(FilterSpatiotemporal, RadiusUsesHaversine) {
  auto t = base_task();
  auto r = base_record(1);
  r.locat = GeoPoint(34.246, 108.905);  // about 92 m east
  EXPECT_FALSE(filter_spatiotemporal(r, t).gps_ok);
  t.d_max = 92.1;
  EXPECT_TRUE(filter_spatiotemporal(r, t).gps_ok);
  t.d_min = 92.05;
  EXPECT_FALSE(filter_spatiotemporal(r, t).gps_ok);
}

TEST(FilterAltitude, ClosedAndOptional) {
  auto t = base_task();
  auto r = base_record(1);
  EXPECT_TRUE(filter_altitude(r, t));
  r.heig = 20.0;
  EXPECT_TRUE(filter_altitude(r, t));
  r.heig = 20.01;
  EXPECT_FALSE(filter_altitude(r, t));
  t.alt_range.reset();
  EXPECT_TRUE(filter_altitude(r, t));
}

TEST(FilterResolution, ShorterSideAgainstFloor) {
  const auto t = base_task();
  auto r = base_record(1);
  EXPECT_TRUE(filter_resolution(r, t));
  r.resol = Resolution(960, 540);
  EXPECT_TRUE(filter_resolution(r, t));
  r.resol = Resolution(640, 352);
  EXPECT_FALSE(filter_resolution(r, t));
  r.resol = Resolution(360, 4000);
  EXPECT_TRUE(filter_resolution(r, t));
}

TEST(Preselect, OneViolationEach) {
  const auto t = base_task();
  std::vector<ImageRecord> recs;
  for (std::uint64_t pid = 1; pid <= 5; ++pid) recs.push_back(base_record(pid));
  recs[0].format = ".bmp";
  recs[1].time = Timestamp::parse("202403150900");
  recs[2].locat = GeoPoint(34.247, 108.904);
  recs[3].heig = -3.0;
  const auto res = preselect(recs, t);
  ASSERT_EQ(res.kept.size(), 1u);
  EXPECT_EQ(res.kept[0].pid, 5u);
  ASSERT_EQ(res.report.rejected.size(), 4u);
  const Filter expected[] = {Filter::Format, Filter::Time, Filter::Gps, Filter::Altitude};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(res.report.rejected[i].pid, i + 1);
    EXPECT_EQ(res.report.rejected[i].failed.members(), std::vector<Filter>{expected[i]});
    EXPECT_EQ(res.report.rejected[i].failed, oracle(recs[i], t));
  }
  EXPECT_DOUBLE_EQ(res.report.reduction_rate, 0.8);
}

TEST(Preselect, EmptyInput) {
  const auto res = preselect({}, base_task());
  EXPECT_TRUE(res.kept.empty());
  EXPECT_EQ(res.report.reduction_rate, 0.0);
  EXPECT_EQ(res.report.original_count, 0u);
}

TEST(Preselect, TaskMismatchIsReported) {
  auto r = base_record(9);
  r.tid = 2;
  const auto res = preselect({r}, base_task());
  ASSERT_EQ(res.report.rejected.size(), 1u);
  EXPECT_EQ(res.report.rejected[0].failed.members(), std::vector<Filter>{Filter::TaskMismatch});
}

TEST(Preselect, PlantedCountsGiveExactReduction) {
  ScenarioConfig cfg;
  cfg.seed = 137;
  cfg.n_images = 137;
  cfg.violation_counts = {{Filter::Format, 8}, {Filter::Time, 8}, {Filter::Gps, 8}, {Filter::Altitude, 8}, {Filter::Resolution, 8}};
  const auto sc = generate_scenario(cfg);
  const auto res = preselect(sc.records, sc.task);
  EXPECT_EQ(res.kept.size(), 97u);
  EXPECT_NEAR(res.report.reduction_rate, 0.292, 0.001);
}

TEST(Preselect, ReportMatchesOracleOnRandomManifests) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.n_images = 300;
    cfg.violation_rates = {{Filter::Format, 0.05}, {Filter::Time, 0.07}, {Filter::Gps, 0.04},
                           {Filter::Altitude, 0.06}, {Filter::Resolution, 0.03}, {Filter::TaskMismatch, 0.02}};
    cfg.multi_violation_rate = 0.3;
    const auto sc = generate_scenario(cfg);
    const auto res = preselect(sc.records, sc.task);
    const auto& rep = res.report;
    EXPECT_EQ(rep.kept_count + rep.rejected.size(), rep.original_count);
    std::array<std::size_t, kAllFilters.size()> pass{};
    std::size_t kept = 0;
    std::size_t ri = 0;
    for (const auto& r : sc.records) {
      const auto expect = oracle(r, sc.task);
      for (Filter f : kAllFilters) pass[static_cast<std::size_t>(f)] += expect.contains(f) ? 0 : 1;
      if (expect.empty()) {
        ASSERT_LT(kept, res.kept.size());
        EXPECT_EQ(res.kept[kept++].pid, r.pid);
      } else {
        ASSERT_LT(ri, rep.rejected.size());
        EXPECT_EQ(rep.rejected[ri].pid, r.pid);
        EXPECT_FALSE(rep.rejected[ri].failed.empty());
        EXPECT_EQ(rep.rejected[ri++].failed, expect);
      }
    }
    EXPECT_EQ(rep.per_filter_pass_counts, pass);
    EXPECT_GE(rep.reduction_rate, 0.0);
    EXPECT_LE(rep.reduction_rate, 1.0);
  }
}

TEST(Preselect, WideningConstraintsNeverShrinksKeptSet) {
  ScenarioConfig cfg;
  cfg.seed = 42;
  cfg.n_images = 400;
  cfg.violation_rates = {{Filter::Format, 0.1}, {Filter::Time, 0.1}, {Filter::Gps, 0.1}, {Filter::Altitude, 0.1},
                         {Filter::Resolution, 0.1}};
  const auto sc = generate_scenario(cfg);
  const auto kept_pids = [&](const TaskSpec& t) {
    std::vector<std::uint64_t> out;
    for (const auto& r : preselect(sc.records, t).kept) out.push_back(r.pid);
    return out;
  };
  const auto base = kept_pids(sc.task);
  const auto superset = [&](const std::vector<std::uint64_t>& wide) {
    return std::includes(wide.begin(), wide.end(), base.begin(), base.end());
  };
  auto t = sc.task;
  t.whn.hi = Timestamp::parse("202403142359");
  EXPECT_TRUE(superset(kept_pids(t)));
  t = sc.task;
  t.d_max *= 3.0;
  EXPECT_TRUE(superset(kept_pids(t)));
  t = sc.task;
  t.alt_range->hi += 30.0;
  t.alt_range->lo -= 10.0;
  EXPECT_TRUE(superset(kept_pids(t)));
  t = sc.task;
  t.formats.insert(".gif");
  EXPECT_TRUE(superset(kept_pids(t)));
  t = sc.task;
  t.resol_min = 300;
  EXPECT_TRUE(superset(kept_pids(t)));
  EXPECT_GT(kept_pids(t).size(), base.size());
}
