#pragma once

// Reproducible synthetic corpora with ground truth: manifests with planted
// filter violations and angular-sector clusters, and rendered turntable
// views of a seeded textured sphere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "triselect/error.hpp"
#include "triselect/image.hpp"
#include "triselect/image_io.hpp"
#include "triselect/metadata.hpp"
#include "triselect/prefilter.hpp"
#include "triselect/rng.hpp"

namespace triselect {

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::size_t n_images = 100;
  int n_clusters = 4;
  double cluster_radius_m = 2.0;  // positional std within a cluster
  double ring_radius_m = 40.0;    // distance of cluster centers from the target
  double heading_jitter_rad = 0.05;
  GeoPoint target{34.246, 108.904};
  std::uint64_t tid = 1;
  double d_max_m = 100.0;
  /// Fraction of records given a planted violation of each filter.
  std::map<Filter, double> violation_rates;
  /// Exact per-filter violator counts; overrides violation_rates when non-empty.
  std::map<Filter, std::size_t> violation_counts;
  /// Probability that a violator receives a second, different violation.
  double multi_violation_rate = 0.0;
  /// Each group is a set of clean records sharing one identical view.
  std::vector<std::size_t> duplicate_group_sizes;
  /// When > 0, emit a single turntable set of this many evenly spaced views.
  int rotation_steps = 0;
  int image_size = 128;
  double image_noise = 0.01;

  void validate() const {
    const auto bad = [](const std::string& why) { return Error(ErrorKind::ConfigInvalid, why); };
    if (n_clusters < 1) throw bad("n_clusters must be >= 1");
    if (rotation_steps < 0) throw bad("rotation_steps must be >= 0");
    if (rotation_steps == 0 && n_images < static_cast<std::size_t>(n_clusters)) throw bad("n_images must be >= n_clusters");
    if (!(cluster_radius_m >= 0.0) || !(ring_radius_m > 0.0) || !(d_max_m > 0.0)) throw bad("radii must be positive");
    if (ring_radius_m + 4.0 * cluster_radius_m >= d_max_m) throw bad("clusters must lie well inside d_max");
    for (const auto& [f, r] : violation_rates) {
      if (!(r >= 0.0 && r <= 1.0)) throw bad(fmt::format("violation rate for {} outside [0, 1]", filter_name(f)));
    }
    if (!(multi_violation_rate >= 0.0 && multi_violation_rate <= 1.0)) throw bad("multi_violation_rate outside [0, 1]");
    if (image_size < 16) throw bad("image_size must be >= 16");
    if (!(image_noise >= 0.0 && image_noise <= 0.1)) throw bad("image_noise outside [0, 0.1]");
  }
};

struct TruthEntry {
  std::uint64_t pid = 0;
  int cluster = 0;
  FilterSet violations;
  int duplicate_group = -1;
  std::optional<double> rotation;  // radians, turntable pose of the view
};

struct GroundTruth {
  std::vector<TruthEntry> entries;  // ascending pid

  const TruthEntry& at(std::uint64_t pid) const {
    const auto it = std::lower_bound(entries.begin(), entries.end(), pid,
                                     [](const TruthEntry& e, std::uint64_t p) { return e.pid < p; });
    if (it == entries.end() || it->pid != pid) throw Error(ErrorKind::ConstraintViolation, fmt::format("no truth for pid {}", pid));
    return *it;
  }
};

struct Scenario {
  TaskSpec task;
  std::vector<ImageRecord> records;
  std::string manifest_text;
  GroundTruth truth;
};

/// The task every generated scenario targets.
inline TaskSpec scenario_task(const ScenarioConfig& cfg) {
  TaskSpec t;
  t.tid = cfg.tid;
  t.formats = {".jpeg", ".jpg", ".png"};
  t.whr = cfg.target;
  t.whn = {Timestamp::from_parts(2024, 3, 14, 10, 0), Timestamp::from_parts(2024, 3, 14, 18, 0)};
  t.ang_inter = std::numbers::pi / 4.0;
  t.alt_range = ClosedInterval<double>{0.0, 20.0};
  t.d_min = 0.0;
  t.d_max = cfg.d_max_m;
  t.resol_min = 360;
  return t;
}

namespace detail {

/// Point at `distance_m` along `bearing` from `origin` (local flat-Earth inverse projection).
inline GeoPoint offset_point(const GeoPoint& origin, double bearing, double distance_m) {
  const double east = distance_m * std::sin(bearing);
  const double north = distance_m * std::cos(bearing);
  const double lat = origin.lat() + rad2deg(north / kEarthRadiusM);
  const double lon = origin.lon() + rad2deg(east / (kEarthRadiusM * std::cos(deg2rad(origin.lat()))));
  return GeoPoint(lat, lon);
}

inline Timestamp minutes_after(const Timestamp& start, long minutes) {
  using namespace std::chrono;
  const sys_days day{year{start.year()} / month{static_cast<unsigned>(start.month())} / std::chrono::day{static_cast<unsigned>(start.day())}};
  const auto t = day + hours{start.hour()} + std::chrono::minutes{start.minute() + minutes};
  const auto dp = floor<days>(t);
  const year_month_day ymd{dp};
  const hh_mm_ss hms{t - dp};
  return Timestamp::from_parts(static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
                               static_cast<int>(static_cast<unsigned>(ymd.day())), static_cast<int>(hms.hours().count()),
                               static_cast<int>(hms.minutes().count()));
}

inline void plant_violation(ImageRecord& r, Filter f, const TaskSpec& task, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (f) {
    case Filter::Format: r.format = u(rng) < 0.5 ? ".gif" : ".bmp"; break;
    case Filter::Time:
      r.time = u(rng) < 0.5 ? minutes_after(task.whn.lo, -1 - static_cast<long>(u(rng) * 600))
                            : minutes_after(task.whn.hi, 1 + static_cast<long>(u(rng) * 600));
      break;
    case Filter::Gps: {
      const double bearing = geo_bearing(task.whr, r.locat);
      r.locat = offset_point(task.whr, bearing, task.d_max * (1.5 + u(rng)));
      break;
    }
    case Filter::Altitude:
      r.heig = u(rng) < 0.5 ? task.alt_range->hi + 5.0 + 40.0 * u(rng) : task.alt_range->lo - 1.0 - 5.0 * u(rng);
      break;
    case Filter::Resolution: r.resol = u(rng) < 0.5 ? Resolution(640, 352) : Resolution(320, 240); break;
    case Filter::TaskMismatch: r.tid = task.tid + 1; break;
  }
}

}  // namespace detail

/// Generates the manifest and its ground truth. Clean records sit in
/// n_clusters angular sectors around the target, each facing the target;
/// violators receive exactly the planted failures.
inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const RngStreams streams(cfg.seed);
  Scenario sc;
  sc.task = scenario_task(cfg);
  const TaskSpec& task = sc.task;

  const bool turntable = cfg.rotation_steps > 0;
  const std::size_t n = turntable ? static_cast<std::size_t>(cfg.rotation_steps) : cfg.n_images;

  auto place = streams.stream("placement");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double phase = turntable ? 0.0 : unit(place) * kTwoPi;
  static constexpr std::array<std::pair<int, int>, 4> kResolutions = {{{1920, 1080}, {1280, 720}, {960, 540}, {4000, 3000}}};

  sc.records.resize(n);
  sc.truth.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = sc.records[i];
    auto& t = sc.truth.entries[i];
    r.pid = i + 1;
    t.pid = r.pid;
    r.tid = cfg.tid;
    r.wid = 1 + static_cast<std::uint64_t>(unit(place) * 22.0);
    r.format = unit(place) < 0.2 ? ".PNG" : ".png";
    r.time = detail::minutes_after(task.whn.lo, 1 + static_cast<long>(unit(place) * 478.0));
    r.heig = 0.5 + 19.0 * unit(place);
    const auto [w, h] = kResolutions[static_cast<std::size_t>(unit(place) * kResolutions.size()) % kResolutions.size()];
    r.resol = Resolution(w, h);

    double sector = 0.0;
    double radius = cfg.ring_radius_m;
    if (turntable) {
      sector = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
      t.cluster = 0;
      t.rotation = sector;
    } else {
      t.cluster = static_cast<int>(i % static_cast<std::size_t>(cfg.n_clusters));
      sector = phase + kTwoPi * t.cluster / cfg.n_clusters + gauss(place) * cfg.cluster_radius_m / cfg.ring_radius_m;
      radius += gauss(place) * cfg.cluster_radius_m;
    }
    r.locat = detail::offset_point(task.whr, wrap_two_pi(sector), radius);
    const double facing = geo_bearing(r.locat, task.whr);
    r.heading = wrap_two_pi(facing + (turntable ? 0.0 : gauss(place) * cfg.heading_jitter_rad));
    if (!turntable) t.rotation = wrap_two_pi(sector);
    r.path = fmt::format("images/{:06}.png", r.pid);
  }

  // Violations.
  std::map<Filter, std::size_t> counts = cfg.violation_counts;
  if (counts.empty()) {
    for (const auto& [f, rate] : cfg.violation_rates) counts[f] = static_cast<std::size_t>(std::lround(rate * static_cast<double>(n)));
  }
  std::size_t violators = 0;
  for (const auto& [f, c] : counts) violators += c;
  if (violators > n) throw Error(ErrorKind::ConfigInvalid, fmt::format("{} planted violators exceed {} records", violators, n));
  if (violators > 0 && turntable) throw Error(ErrorKind::ConfigInvalid, "turntable scenarios carry no violations");

  auto vrng = streams.stream("violations");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), vrng);
  std::size_t next = 0;
  for (const auto& [f, c] : counts) {
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t idx = order[next++];
      sc.truth.entries[idx].violations.insert(f);
      if (cfg.multi_violation_rate > 0.0 && unit(vrng) < cfg.multi_violation_rate) {
        std::vector<Filter> others;
        for (Filter g : kAllFilters) {
          if (g != f) others.push_back(g);
        }
        sc.truth.entries[idx].violations.insert(others[static_cast<std::size_t>(unit(vrng) * others.size()) % others.size()]);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (Filter f : sc.truth.entries[i].violations.members()) detail::plant_violation(sc.records[i], f, task, vrng);
  }

  // Duplicate groups: consecutive clean records of one cluster share a view.
  if (!cfg.duplicate_group_sizes.empty()) {
    std::map<int, std::vector<std::size_t>> clean_by_cluster;
    for (std::size_t i = 0; i < n; ++i) {
      if (sc.truth.entries[i].violations.empty()) clean_by_cluster[sc.truth.entries[i].cluster].push_back(i);
    }
    int group = 0;
    for (std::size_t g = 0; g < cfg.duplicate_group_sizes.size(); ++g, ++group) {
      const std::size_t size = cfg.duplicate_group_sizes[g];
      auto& pool = clean_by_cluster[static_cast<int>(g % static_cast<std::size_t>(cfg.n_clusters))];
      if (pool.size() < size) throw Error(ErrorKind::ConfigInvalid, fmt::format("duplicate group {} does not fit its cluster", g));
      const std::size_t lead = pool.front();
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t idx = pool[j];
        sc.truth.entries[idx].duplicate_group = group;
        sc.truth.entries[idx].rotation = sc.truth.entries[lead].rotation;
        sc.records[idx].locat = sc.records[lead].locat;
        sc.records[idx].heading = sc.records[lead].heading;
      }
      pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size));
    }
  }

  sc.manifest_text = serialize_manifest(sc.records);
  return sc;
}

// ---------------------------------------------------------------------------
// Rendering

struct Pose {
  double rotation = 0.0;  // turntable angle, radians
  double scale = 1.0;     // [0.5, 2]
  double noise = 0.0;     // additive Gaussian std, [0, 0.1]
};

inline constexpr int kPrismSides = 8;
inline constexpr double kPrismExtent = 0.42;     // circumradius as a fraction of the image side
inline constexpr double kPrismHalfHeight = 0.9;  // object units

/// Seeded texture on the unit sphere: soft blobs plus smoothed step edges.
class SphereScene {
 public:
  explicit SphereScene(std::uint64_t seed) {
    auto rng = RngStreams(seed).stream("scene");
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto unit_vec = [&] {
      std::array<double, 3> v{g(rng), g(rng), g(rng)};
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      for (double& c : v) c /= n;
      return v;
    };
    // Jittered Fibonacci lattice keeps blob density even over the sphere.
    blobs_.resize(500);
    const double n_blobs = static_cast<double>(blobs_.size());
    const double spacing = std::sqrt(4.0 * std::numbers::pi / n_blobs);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double twist = u(rng) * kTwoPi;
    for (std::size_t i = 0; i < blobs_.size(); ++i) {
      auto& b = blobs_[i];
      const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / n_blobs;
      const double rho = std::sqrt(1.0 - z * z);
      const double phi = twist + golden * static_cast<double>(i);
      std::array<double, 3> v{rho * std::cos(phi) + 0.3 * spacing * g(rng), z + 0.3 * spacing * g(rng),
                              rho * std::sin(phi) + 0.3 * spacing * g(rng)};
      const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      for (double& c : v) c /= norm;
      b.center = v;
      const double width = 0.03 + 0.03 * u(rng);
      b.inv_two_w2 = 1.0 / (2.0 * width * width);
      b.min_dot = std::cos(std::min(4.0 * width, std::numbers::pi));
      b.amplitude = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 0.3 * u(rng));
    }
    edges_.resize(10);
    for (auto& e : edges_) {
      e.normal = unit_vec();
      e.offset = 0.6 * (u(rng) - 0.5);
      e.amplitude = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.1 + 0.1 * u(rng));
    }
  }

  double albedo(const std::array<double, 3>& p) const {
    double v = 0.5;
    for (const auto& b : blobs_) {
      const double d = p[0] * b.center[0] + p[1] * b.center[1] + p[2] * b.center[2];
      if (d < b.min_dot) continue;
      const double ang = std::acos(std::min(d, 1.0));
      v += b.amplitude * std::exp(-ang * ang * b.inv_two_w2);
    }
    for (const auto& e : edges_) {
      const double s = p[0] * e.normal[0] + p[1] * e.normal[1] + p[2] * e.normal[2] - e.offset;
      v += e.amplitude * std::tanh(s / 0.03);
    }
    return std::clamp(v, 0.0, 1.0);
  }

 private:
  struct Blob {
    std::array<double, 3> center;
    double inv_two_w2;
    double min_dot;
    double amplitude;
  };
  struct Edge {
    std::array<double, 3> normal;
    double offset;
    double amplitude;
  };
  std::vector<Blob> blobs_;
  std::vector<Edge> edges_;
};

/// Orthographic view of a textured regular prism spun by `pose.rotation` about
/// its vertical axis, on a black background. One face sits at 45 degrees to
/// the viewing direction at rotation 0. The texture is the scene's spherical
/// field sampled along the direction of each surface point. Same inputs give
/// identical pixels.
inline GrayImage render_view(std::uint64_t scene_seed, const Pose& pose, int size = 128) {
  if (!(pose.scale >= 0.5 && pose.scale <= 2.0) || !(pose.noise >= 0.0 && pose.noise <= 0.1) || !std::isfinite(pose.rotation)) {
    throw Error(ErrorKind::PoseOutOfRange, fmt::format("pose (rotation {}, scale {}, noise {}) out of range", pose.rotation,
                                                       pose.scale, pose.noise));
  }
  if (size < 16) throw Error(ErrorKind::ImageTooSmall, fmt::format("render size {} below 16", size));
  const SphereScene scene(scene_seed);
  const double unit = kPrismExtent * size * pose.scale;  // pixels per object unit
  const int sides = kPrismSides;
  const double apothem = std::cos(std::numbers::pi / sides);  // circumradius 1
  const double c = std::cos(pose.rotation);
  const double s = std::sin(pose.rotation);
  // Object frame (p_x, p_z) = base + z * dir along the view ray; dir also
  // points back at the viewer.
  const std::array<double, 2> dir{s, c};
  std::vector<std::array<double, 2>> normals(static_cast<std::size_t>(sides));
  double x_extent = 0.0;
  for (int k = 0; k < sides; ++k) {
    const double a = std::numbers::pi / 4.0 + kTwoPi * k / sides;
    normals[static_cast<std::size_t>(k)] = {std::cos(a), std::sin(a)};
    const double va = a + std::numbers::pi / sides;  // vertex between faces k and k+1
    x_extent = std::max(x_extent, std::abs(std::cos(va) * c - std::sin(va) * s));
  }
  GrayImage img(size, size);
  for (int v = 0; v < size; ++v) {
    const double y = -(v + 0.5 - size / 2.0) / unit;
    const double cov_y = std::clamp((kPrismHalfHeight - std::abs(y)) * unit + 0.5, 0.0, 1.0);
    if (cov_y <= 0.0) continue;
    for (int u = 0; u < size; ++u) {
      const double x = (u + 0.5 - size / 2.0) / unit;
      // One-pixel antialiased silhouette.
      const double coverage = cov_y * std::clamp((x_extent - std::abs(x)) * unit + 0.5, 0.0, 1.0);
      if (coverage <= 0.0) continue;
      const std::array<double, 2> base{c * x, -s * x};
      // Entry point: the tightest bound among faces turned toward the viewer.
      double z_hit = std::numeric_limits<double>::infinity();
      std::size_t face = 0;
      for (std::size_t k = 0; k < normals.size(); ++k) {
        const double dn = dir[0] * normals[k][0] + dir[1] * normals[k][1];
        if (dn <= 1e-12) continue;
        const double z = (apothem - (base[0] * normals[k][0] + base[1] * normals[k][1])) / dn;
        if (z < z_hit) {
          z_hit = z;
          face = k;
        }
      }
      const double z = std::clamp(z_hit, -1.0, 1.0);
      const std::array<double, 3> p{base[0] + z * dir[0], y, base[1] + z * dir[1]};
      const double facing = dir[0] * normals[face][0] + dir[1] * normals[face][1];
      const double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
      const double shade = 0.5 + 0.5 * facing;
      img.at(u, v) = static_cast<float>(coverage * shade * scene.albedo({p[0] / n, p[1] / n, p[2] / n}));
    }
  }
  if (pose.noise > 0.0) {
    const std::uint64_t bits = std::hash<double>{}(pose.rotation) ^ (std::hash<double>{}(pose.scale) << 1) ^
                               (std::hash<double>{}(pose.noise) << 2);
    auto rng = RngStreams(scene_seed).stream("noise", bits);
    std::normal_distribution<double> g(0.0, pose.noise);
    for (int v = 0; v < size; ++v) {
      for (int u = 0; u < size; ++u) img.at(u, v) = static_cast<float>(std::clamp(img.at(u, v) + g(rng), 0.0, 1.0));
    }
  }
  return img;
}

/// Scene seed used for every image of a scenario.
inline std::uint64_t scenario_scene_seed(const ScenarioConfig& cfg) { return RngStreams(cfg.seed).derive("scene-object"); }

/// Renders the view for one record of a generated scenario.
inline GrayImage render_record(const ScenarioConfig& cfg, const TruthEntry& truth) {
  return render_view(scenario_scene_seed(cfg), Pose{truth.rotation.value_or(0.0), 1.0, cfg.image_noise}, cfg.image_size);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json truth_to_json(const GroundTruth& truth, const ScenarioConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : truth.entries) {
    nlohmann::ordered_json row;
    row["pid"] = e.pid;
    row["cluster"] = e.cluster;
    nlohmann::ordered_json v = nlohmann::ordered_json::array();
    for (Filter f : e.violations.members()) v.push_back(std::string(filter_name(f)));
    row["violations"] = v;
    row["duplicate_group"] = e.duplicate_group;
    if (e.rotation) row["rotation"] = *e.rotation;
    entries.push_back(std::move(row));
  }
  j["records"] = std::move(entries);
  return j;
}

inline std::optional<Filter> filter_from_name(std::string_view name) {
  for (Filter f : kAllFilters) {
    if (filter_name(f) == name) return f;
  }
  return std::nullopt;
}

/// Reads a scenario config document; absent keys keep their defaults.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.n_images = j.value("n_images", cfg.n_images);
    cfg.n_clusters = j.value("n_clusters", cfg.n_clusters);
    cfg.cluster_radius_m = j.value("cluster_radius_m", cfg.cluster_radius_m);
    cfg.ring_radius_m = j.value("ring_radius_m", cfg.ring_radius_m);
    cfg.heading_jitter_rad = j.value("heading_jitter_rad", cfg.heading_jitter_rad);
    if (j.contains("target")) cfg.target = GeoPoint(j["target"].at(0).get<double>(), j["target"].at(1).get<double>());
    cfg.tid = j.value("tid", cfg.tid);
    cfg.d_max_m = j.value("d_max_m", cfg.d_max_m);
    const auto filters = [&](const char* key, auto& dest) {
      if (!j.contains(key)) return;
      for (const auto& [name, value] : j[key].items()) {
        const auto f = filter_from_name(name);
        if (!f) throw Error(ErrorKind::ConfigInvalid, fmt::format("unknown filter '{}' in {}", name, key));
        dest[*f] = value.template get<typename std::decay_t<decltype(dest)>::mapped_type>();
      }
    };
    filters("violation_rates", cfg.violation_rates);
    filters("violation_counts", cfg.violation_counts);
    cfg.multi_violation_rate = j.value("multi_violation_rate", cfg.multi_violation_rate);
    if (j.contains("duplicate_group_sizes")) cfg.duplicate_group_sizes = j["duplicate_group_sizes"].get<std::vector<std::size_t>>();
    cfg.rotation_steps = j.value("rotation_steps", cfg.rotation_steps);
    cfg.image_size = j.value("image_size", cfg.image_size);
    cfg.image_noise = j.value("image_noise", cfg.image_noise);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ConfigInvalid, e.what());
  }
  cfg.validate();
  return cfg;
}

/// Writes task.txt, manifest.jsonl, truth.json and, when `render_images`,
/// images/<pid>.png under `dir`.
inline Scenario write_scenario(const ScenarioConfig& cfg, const std::filesystem::path& dir, bool render_images = true) {
  Scenario sc = generate_scenario(cfg);
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "task.txt") << serialize_task_spec(sc.task);
  std::ofstream(dir / "manifest.jsonl") << sc.manifest_text;
  std::ofstream(dir / "truth.json") << truth_to_json(sc.truth, cfg).dump(2) << '\n';
  if (render_images) {
    std::filesystem::create_directories(dir / "images");
    for (std::size_t i = 0; i < sc.records.size(); ++i) {
      const auto& t = sc.truth.entries[i];
      save_png(render_record(cfg, t), dir / *sc.records[i].path);
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// COIL-100 style directories

struct CoilView {
  std::uint64_t pid = 0;  // object * 1000 + angle in degrees
  int object = 0;
  int angle_deg = 0;
  std::filesystem::path path;
};

/// Lists `obj<ID>__<angle>.png` files, optionally for one object, sorted by
/// (object, angle).
inline std::vector<CoilView> list_coil_views(const std::filesystem::path& dir, std::optional<int> object = std::nullopt) {
  static const std::regex name_re(R"(obj(\d+)__(\d+)\.png)", std::regex::icase);
  std::vector<CoilView> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, name_re)) continue;
    CoilView v;
    v.object = std::stoi(m[1].str());
    v.angle_deg = std::stoi(m[2].str());
    if (object && v.object != *object) continue;
    v.pid = static_cast<std::uint64_t>(v.object) * 1000 + static_cast<std::uint64_t>(v.angle_deg);
    v.path = entry.path();
    out.push_back(std::move(v));
  }
  std::sort(out.begin(), out.end(), [](const CoilView& a, const CoilView& b) { return a.pid < b.pid; });
  return out;
}

}  // namespace triselect
