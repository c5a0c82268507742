#pragma once

// Stage II: viewpoint features, RBF affinity, normalized spectral clustering
// (Ng, Jordan & Weiss) and silhouette-driven choice of the cluster count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/metadata.hpp"
#include "triselect/parallel.hpp"
#include "triselect/rng.hpp"

namespace triselect {

/// [normalized east offset, normalized north offset, cos(theta), sin(theta)]
struct ViewFeature {
  double dx = 0.0;
  double dy = 0.0;
  double cos_t = 1.0;
  double sin_t = 0.0;

  std::array<double, 4> values() const noexcept { return {dx, dy, cos_t, sin_t}; }
  friend bool operator==(const ViewFeature&, const ViewFeature&) = default;
};

inline double squared_distance(const ViewFeature& a, const ViewFeature& b) noexcept {
  const double d0 = a.dx - b.dx;
  const double d1 = a.dy - b.dy;
  const double d2 = a.cos_t - b.cos_t;
  const double d3 = a.sin_t - b.sin_t;
  return d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3;
}

inline double distance(const ViewFeature& a, const ViewFeature& b) noexcept { return std::sqrt(squared_distance(a, b)); }

inline constexpr double kSigmaFloor = 1e-6;

struct NormStats {
  double sigma_x = 1.0;  // meters
  double sigma_y = 1.0;  // meters
};

struct AffinityMatrix {
  Eigen::MatrixXd s;

  std::size_t n() const noexcept { return static_cast<std::size_t>(s.rows()); }
};

struct ClusterAssignment {
  int k = 1;
  std::vector<int> labels;

  friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

struct SilhouetteReport {
  std::map<int, double> per_k;
  int best_k = 0;
  /// a(i), b(i) for the best k, in input order.
  std::vector<double> a;
  std::vector<double> b;
};

// ---------------------------------------------------------------------------
// Features

/// Population standard deviation of the projected east/north offsets about
/// the task center, floored at kSigmaFloor.
inline NormStats compute_norm_stats(std::span<const ImageRecord> records, const TaskSpec& task) {
  if (records.size() < 2) {
    throw Error(ErrorKind::TooFewRecords, fmt::format("need >= 2 records for normalization, got {}", records.size()));
  }
  const double n = static_cast<double>(records.size());
  double mx = 0.0;
  double my = 0.0;
  std::vector<LocalOffset> offs;
  offs.reserve(records.size());
  for (const auto& r : records) {
    offs.push_back(project_local(r.locat, task.whr));
    mx += offs.back().east;
    my += offs.back().north;
  }
  mx /= n;
  my /= n;
  double vx = 0.0;
  double vy = 0.0;
  for (const auto& o : offs) {
    vx += (o.east - mx) * (o.east - mx);
    vy += (o.north - my) * (o.north - my);
  }
  return {std::max(std::sqrt(vx / n), kSigmaFloor), std::max(std::sqrt(vy / n), kSigmaFloor)};
}

/// Shooting direction: the recorded heading, else the bearing toward the
/// task center.
inline double capture_angle(const ImageRecord& r, const TaskSpec& task) {
  if (r.heading) return *r.heading;
  if (coincident(r.locat, task.whr)) {
    throw PidError(ErrorKind::DegenerateAngle, r.pid, "no heading and located at the task center");
  }
  return geo_bearing(r.locat, task.whr);
}

inline std::vector<ViewFeature> build_features(std::span<const ImageRecord> records, const TaskSpec& task,
                                               const NormStats& stats) {
  std::vector<ViewFeature> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const double theta = capture_angle(r, task);
    const auto off = project_local(r.locat, task.whr);
    out.push_back({off.east / stats.sigma_x, off.north / stats.sigma_y, std::cos(theta), std::sin(theta)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Affinity

inline AffinityMatrix rbf_affinity(std::span<const ViewFeature> features, double sigma, unsigned threads = 1) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::InvalidSigma, fmt::format("RBF sigma must be > 0, got {}", sigma));
  }
  const auto n = static_cast<Eigen::Index>(features.size());
  AffinityMatrix a{Eigen::MatrixXd::Identity(n, n)};
  const double denom = 2.0 * sigma * sigma;
  // Each row owns its upper-triangle entries and mirrors them; writes are disjoint.
  parallel_for(features.size(), threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) {
      const double v = std::exp(-squared_distance(features[i], features[j]) / denom);
      a.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      a.s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  });
  return a;
}

/// Median pairwise Euclidean distance; 1.0 when that median is zero.
inline double default_sigma(std::span<const ViewFeature> features) {
  if (features.size() < 2) {
    throw Error(ErrorKind::TooFewRecords, fmt::format("need >= 2 features for default sigma, got {}", features.size()));
  }
  std::vector<double> d;
  d.reserve(features.size() * (features.size() - 1) / 2);
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (std::size_t j = i + 1; j < features.size(); ++j) d.push_back(distance(features[i], features[j]));
  }
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  return median > 0.0 ? median : 1.0;
}

// ---------------------------------------------------------------------------
// Spectral clustering

/// L_sym = I - D^{-1/2} S D^{-1/2}.
inline Eigen::MatrixXd normalized_laplacian(const AffinityMatrix& affinity) {
  const Eigen::VectorXd deg = affinity.s.rowwise().sum();
  const Eigen::VectorXd inv_sqrt = deg.unaryExpr([](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
  Eigen::MatrixXd l = -(inv_sqrt.asDiagonal() * affinity.s * inv_sqrt.asDiagonal());
  l.diagonal().array() += 1.0;
  // Symmetrize away rounding so the solver sees an exactly symmetric input.
  l = 0.5 * (l + l.transpose()).eval();
  return l;
}

/// Rows of the n x k matrix of eigenvectors for the k smallest eigenvalues
/// of L_sym, each scaled to unit length (all-zero rows stay zero).
inline Eigen::MatrixXd spectral_embedding(const AffinityMatrix& affinity, int k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(normalized_laplacian(affinity));
  Eigen::MatrixXd u = solver.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double norm = u.row(i).norm();
    if (norm > 0.0) u.row(i) /= norm;
  }
  return u;
}

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-8;  // max centroid shift
  int restarts = 10;        // independent k-means++ initializations; lowest inertia wins
  int max_reseeds = 10;     // extra initializations allowed per restart when a cluster empties
};

namespace detail {

inline Eigen::MatrixXd kmeanspp_seed(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const auto n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Eigen::Index first = pick(rng);
  centers.row(0) = x.row(first);
  chosen[static_cast<std::size_t>(first)] = 1;
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index next = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && acc >= target) {
          next = i;
          break;
        }
      }
      if (next < 0) {
        for (Eigen::Index i = n - 1; i >= 0; --i) {
          if (d2(i) > 0.0) {
            next = i;
            break;
          }
        }
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) {
          next = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(next);
    chosen[static_cast<std::size_t>(next)] = 1;
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

struct KMeansRun {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

/// One Lloyd run from the given centers. Returns nullopt when a cluster empties.
inline std::optional<KMeansRun> lloyd(const Eigen::MatrixXd& x, Eigen::MatrixXd centers, const KMeansOptions& opt) {
  const auto n = x.rows();
  const auto k = centers.rows();
  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    std::fill(counts.begin(), counts.end(), 0);
    run.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      run.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
      ++counts[static_cast<std::size_t>(best)];
      run.inertia += best_d;
    }
    if (std::any_of(counts.begin(), counts.end(), [](Eigen::Index c) { return c == 0; })) return std::nullopt;

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) next.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
    for (Eigen::Index c = 0; c < k; ++c) next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    const double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = std::move(next);
    if (shift <= opt.tolerance) break;
  }
  return run;
}

}  // namespace detail

/// k-means with k-means++ seeding. Labels are raw cluster indices (not
/// canonicalized). Deterministic in (x, k, seed).
inline std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, const KMeansOptions& opt = {}) {
  const RngStreams streams(seed);
  std::optional<detail::KMeansRun> best;
  for (int r = 0; r < std::max(opt.restarts, 1); ++r) {
    auto rng = streams.stream("kmeans", static_cast<std::uint64_t>(r));
    for (int attempt = 0; attempt <= opt.max_reseeds; ++attempt) {
      auto run = detail::lloyd(x, detail::kmeanspp_seed(x, k, rng), opt);
      if (!run) continue;
      if (!best || run->inertia < best->inertia) best = std::move(run);
      break;
    }
  }
  if (!best) {
    throw Error(ErrorKind::EmptyClusterUnrecoverable,
                fmt::format("k-means could not fill {} clusters after {} reseeds", k, opt.max_reseeds));
  }
  return std::move(best->labels);
}

/// Relabels so cluster indices ascend with the smallest pid they contain.
/// An empty `pids` means "use the input index as pid".
inline ClusterAssignment canonicalize_labels(std::span<const int> raw, int k, std::span<const std::uint64_t> pids) {
  const auto pid_of = [&](std::size_t i) { return pids.empty() ? static_cast<std::uint64_t>(i) : pids[i]; };
  std::vector<std::uint64_t> min_pid(static_cast<std::size_t>(k), std::numeric_limits<std::uint64_t>::max());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& m = min_pid[static_cast<std::size_t>(raw[i])];
    m = std::min(m, pid_of(i));
  }
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return min_pid[static_cast<std::size_t>(a)] < min_pid[static_cast<std::size_t>(b)];
  });
  std::vector<int> remap(static_cast<std::size_t>(k));
  for (int rank = 0; rank < k; ++rank) remap[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] = rank;
  ClusterAssignment out{k, {}};
  out.labels.reserve(raw.size());
  for (int l : raw) out.labels.push_back(remap[static_cast<std::size_t>(l)]);
  return out;
}

inline ClusterAssignment spectral_cluster(const AffinityMatrix& affinity, int k, std::uint64_t seed,
                                          std::span<const std::uint64_t> pids = {}, const KMeansOptions& opt = {}) {
  const auto n = static_cast<int>(affinity.n());
  if (k < 1 || k > n) throw Error(ErrorKind::InvalidK, fmt::format("k = {} outside [1, {}]", k, n));
  if (!pids.empty() && pids.size() != affinity.n()) {
    throw Error(ErrorKind::ConstraintViolation, "pid list does not match affinity size");
  }
  std::vector<int> raw(static_cast<std::size_t>(n), 0);
  if (k == n) {
    std::iota(raw.begin(), raw.end(), 0);
  } else if (k > 1) {
    raw = kmeans(spectral_embedding(affinity, k), k, seed, opt);
  }
  return canonicalize_labels(raw, k, pids);
}

// ---------------------------------------------------------------------------
// Silhouette

struct SilhouetteDetail {
  double score = 0.0;
  std::vector<double> a;
  std::vector<double> b;
};

inline SilhouetteDetail silhouette_detail(std::span<const ViewFeature> features, const ClusterAssignment& assignment) {
  if (assignment.k < 2) throw Error(ErrorKind::InvalidK, fmt::format("silhouette needs k >= 2, got {}", assignment.k));
  const std::size_t n = features.size();
  if (assignment.labels.size() != n) throw Error(ErrorKind::ConstraintViolation, "label count mismatch");
  const auto k = static_cast<std::size_t>(assignment.k);
  std::vector<std::size_t> size(k, 0);
  for (int l : assignment.labels) ++size[static_cast<std::size_t>(l)];

  SilhouetteDetail out;
  out.a.assign(n, 0.0);
  out.b.assign(n, 0.0);
  std::vector<double> sums(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[static_cast<std::size_t>(assignment.labels[j])] += distance(features[i], features[j]);
    }
    const auto own = static_cast<std::size_t>(assignment.labels[i]);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != own && size[c] > 0) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    }
    const double a = size[own] > 1 ? sums[own] / static_cast<double>(size[own] - 1) : 0.0;
    out.a[i] = a;
    out.b[i] = b;
    if (size[own] > 1) {
      const double m = std::max(a, b);
      if (m > 0.0) total += (b - a) / m;
    }
  }
  out.score = n > 0 ? total / static_cast<double>(n) : 0.0;
  return out;
}

/// Mean silhouette; points in singleton clusters contribute 0.
inline double silhouette(std::span<const ViewFeature> features, const ClusterAssignment& assignment) {
  return silhouette_detail(features, assignment).score;
}

struct SelectKOptions {
  int k_min = 2;
  int k_max = 0;  // 0 = min(10, n - 1)
  std::optional<double> sigma;  // RBF width; default_sigma() when absent
  std::uint64_t seed = 0;
  unsigned threads = 1;
  KMeansOptions kmeans;
};

struct SelectKResult {
  ClusterAssignment assignment;
  SilhouetteReport report;
  double sigma = 0.0;
};

/// Clusters for every k in range and keeps the best silhouette (ties toward
/// the smaller k).
inline SelectKResult select_k(std::span<const ViewFeature> features, const SelectKOptions& opt,
                              std::span<const std::uint64_t> pids = {}) {
  const int n = static_cast<int>(features.size());
  if (n < 3) throw Error(ErrorKind::TooFewRecords, fmt::format("select_k needs >= 3 features, got {}", n));
  const int k_max = opt.k_max > 0 ? opt.k_max : std::min(10, n - 1);
  if (opt.k_min < 2 || k_max > n - 1 || opt.k_min > k_max) {
    throw Error(ErrorKind::InvalidK, fmt::format("k range [{}, {}] not within [2, {}]", opt.k_min, k_max, n - 1));
  }
  SelectKResult out;
  out.sigma = opt.sigma ? *opt.sigma : default_sigma(features);
  const AffinityMatrix affinity = rbf_affinity(features, out.sigma, opt.threads);

  const auto count = static_cast<std::size_t>(k_max - opt.k_min + 1);
  std::vector<ClusterAssignment> assignments(count);
  std::vector<SilhouetteDetail> details(count);
  parallel_for(count, opt.threads, [&](std::size_t idx) {
    const int k = opt.k_min + static_cast<int>(idx);
    assignments[idx] = spectral_cluster(affinity, k, opt.seed, pids, opt.kmeans);
    details[idx] = silhouette_detail(features, assignments[idx]);
  });

  std::size_t best = 0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    out.report.per_k[opt.k_min + static_cast<int>(idx)] = details[idx].score;
    if (details[idx].score > details[best].score) best = idx;
  }
  out.report.best_k = opt.k_min + static_cast<int>(best);
  out.report.a = std::move(details[best].a);
  out.report.b = std::move(details[best].b);
  out.assignment = std::move(assignments[best]);
  return out;
}

}  // namespace triselect
