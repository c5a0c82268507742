#pragma once

// Reference implementations used as oracles by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "triselect/graph_select.hpp"
#include "triselect/spectral.hpp"

namespace oracle {

/// Adjusted Rand index between two labelings of the same points.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const std::size_t n = a.size();
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra;
  std::map<int, double> rb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (const auto& [k, v] : joint) sum_ij += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(static_cast<double>(n));
  const double max_index = (sum_a + sum_b) / 2;
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

/// Direct double-loop silhouette over Euclidean feature distances.
inline double silhouette(std::span<const triselect::ViewFeature> f, std::span<const int> labels, int k) {
  const std::size_t n = f.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = f[i].dx - f[j].dx, dy = f[i].dy - f[j].dy;
      const double dc = f[i].cos_t - f[j].cos_t, ds = f[i].sin_t - f[j].sin_t;
      sum[static_cast<std::size_t>(labels[j])] += std::sqrt(dx * dx + dy * dy + dc * dc + ds * ds);
      cnt[static_cast<std::size_t>(labels[j])] += 1;
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (cnt[own] == 0) continue;  // singleton contributes 0
    const double a = sum[own] / cnt[own];
    double b = INFINITY;
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (c != own && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

/// Adjacency bitmasks for graphs with at most 64 nodes.
inline std::vector<std::uint64_t> adjacency_masks(const triselect::SimilarityGraph& g) {
  std::vector<std::uint64_t> adj(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j : g.neighbors(i)) adj[i] |= std::uint64_t{1} << j;
  }
  return adj;
}

/// Exhaustive maximum independent set size (n <= 20).
inline std::size_t max_independent_set(const triselect::SimilarityGraph& g) {
  const auto adj = adjacency_masks(g);
  const std::size_t n = g.size();
  std::size_t best = 0;
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if ((s >> i & 1) && (adj[i] & s)) ok = false;
    }
    if (ok) best = std::max<std::size_t>(best, static_cast<std::size_t>(__builtin_popcountll(s)));
  }
  return best;
}

inline bool is_independent(const triselect::SimilarityGraph& g, std::span<const std::uint64_t> pids) {
  for (std::size_t a = 0; a < pids.size(); ++a) {
    for (std::size_t b = a + 1; b < pids.size(); ++b) {
      if (g.adjacent(g.index_of(pids[a]), g.index_of(pids[b]))) return false;
    }
  }
  return true;
}

/// No unselected node can be added without breaking independence.
inline bool is_maximal(const triselect::SimilarityGraph& g, std::span<const std::uint64_t> pids) {
  std::vector<bool> in(g.size(), false);
  for (auto p : pids) in[g.index_of(p)] = true;
  for (std::size_t v = 0; v < g.size(); ++v) {
    if (in[v]) continue;
    bool blocked = false;
    for (std::size_t u : g.neighbors(v)) blocked = blocked || in[u];
    if (!blocked) return false;
  }
  return true;
}

inline double caro_wei(const triselect::SimilarityGraph& g) {
  double s = 0;
  for (std::size_t v = 0; v < g.size(); ++v) s += 1.0 / (static_cast<double>(g.degree(v)) + 1.0);
  return s;
}

/// Random symmetric similarity matrix with unit diagonal; each pair is
/// above `tau` with probability `p`.
inline Eigen::MatrixXd random_similarity(std::size_t n, double p, double tau, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = u(rng) < p ? tau + (1.0 - tau) * u(rng) : tau * u(rng) * 0.999;
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  }
  return s;
}

}  // namespace oracle
