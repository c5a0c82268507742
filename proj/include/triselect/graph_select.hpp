#pragma once

// Stage III selection: per-cluster thresholded similarity graphs and a
// lowest-degree greedy independent set under a global budget.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/matching.hpp"
#include "triselect/parallel.hpp"

namespace triselect {

inline constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

class SimilarityGraph {
 public:
  SimilarityGraph() = default;

  /// `nodes` ascending; `weights` symmetric with zero diagonal.
  SimilarityGraph(std::vector<std::uint64_t> nodes, Eigen::MatrixXd weights, double tau)
      : nodes_(std::move(nodes)), weights_(std::move(weights)), tau_(tau) {
    adjacency_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      for (std::size_t j = 0; j < nodes_.size(); ++j) {
        if (i != j && weight(i, j) > 0.0) adjacency_[i].push_back(j);
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::uint64_t>& nodes() const noexcept { return nodes_; }
  const Eigen::MatrixXd& weights() const noexcept { return weights_; }
  double tau() const noexcept { return tau_; }

  double weight(std::size_t i, std::size_t j) const {
    return weights_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  bool adjacent(std::size_t i, std::size_t j) const { return i != j && weight(i, j) > 0.0; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& a : adjacency_) twice += a.size();
    return twice / 2;
  }

  /// Index of `pid` in nodes(), or size() when absent.
  std::size_t index_of(std::uint64_t pid) const {
    const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), pid);
    return (it != nodes_.end() && *it == pid) ? static_cast<std::size_t>(it - nodes_.begin()) : nodes_.size();
  }

 private:
  std::vector<std::uint64_t> nodes_;
  Eigen::MatrixXd weights_;
  double tau_ = 0.0;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// w_ij = S_ij when S_ij >= tau, else 0; no self-loops. Nodes are reordered
/// by ascending pid together with the matrix.
inline SimilarityGraph build_graph(std::span<const std::uint64_t> pids, const Eigen::MatrixXd& similarity, double tau) {
  const auto n = pids.size();
  if (similarity.rows() != static_cast<Eigen::Index>(n) || similarity.cols() != static_cast<Eigen::Index>(n)) {
    throw Error(ErrorKind::ConstraintViolation, fmt::format("similarity is {}x{} for {} pids", similarity.rows(), similarity.cols(), n));
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::ConfigInvalid, fmt::format("tau {} outside [0, 1]", tau));
  for (Eigen::Index i = 0; i < similarity.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < similarity.cols(); ++j) {
      if (std::abs(similarity(i, j) - similarity(j, i)) > 1e-9) {
        throw Error(ErrorKind::AsymmetricInput, fmt::format("S({0},{1}) = {2} but S({1},{0}) = {3}", i, j, similarity(i, j), similarity(j, i)));
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pids[a] < pids[b]; });
  std::vector<std::uint64_t> nodes(n);
  for (std::size_t i = 0; i < n; ++i) nodes[i] = pids[order[i]];
  if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end()) {
    throw Error(ErrorKind::DuplicatePid, "graph pids must be unique");
  }

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto a = static_cast<Eigen::Index>(order[i]);
      const auto b = static_cast<Eigen::Index>(order[j]);
      // Average the two (within 1e-9) halves so the stored matrix is exactly symmetric.
      const double s = 0.5 * (similarity(a, b) + similarity(b, a));
      if (s >= tau && s > 0.0) {
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
        w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
      }
    }
  }
  return SimilarityGraph(std::move(nodes), std::move(w), tau);
}

/// Repeatedly takes the lowest-degree remaining node (ties: smallest pid)
/// and deletes it with its neighbors, until `budget` picks or an empty graph.
/// Returns pids in selection order.
inline std::vector<std::uint64_t> greedy_mis(const SimilarityGraph& g, std::size_t budget) {
  const std::size_t n = g.size();
  std::vector<char> alive(n, 1);
  std::vector<std::size_t> degree(n);
  for (std::size_t i = 0; i < n; ++i) degree[i] = g.degree(i);
  std::size_t remaining = n;
  std::vector<std::uint64_t> picked;

  const auto remove = [&](std::size_t v) {
    alive[v] = 0;
    --remaining;
    for (std::size_t u : g.neighbors(v)) {
      if (alive[u]) --degree[u];
    }
  };

  while (picked.size() < budget && remaining > 0) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (alive[i] && (best == n || degree[i] < degree[best])) best = i;
    }
    picked.push_back(g.nodes()[best]);
    std::vector<std::size_t> doomed{best};
    for (std::size_t u : g.neighbors(best)) {
      if (alive[u]) doomed.push_back(u);
    }
    for (std::size_t v : doomed) {
      if (alive[v]) remove(v);
    }
  }
  return picked;
}

/// Largest-remainder apportionment of `budget` across clusters in proportion
/// to size. When the budget covers every non-empty cluster each gets one unit
/// first and the rest is split by size - 1. Allocations never exceed sizes and
/// sum to min(budget, total size). Remainder ties go to the lower index.
inline std::vector<std::size_t> allocate_budget(std::span<const std::size_t> sizes, std::size_t budget) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  const std::size_t target = std::min(budget, total);
  std::vector<std::size_t> alloc(sizes.size(), 0);
  if (target == 0) return alloc;

  const std::size_t nonempty = static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }));
  std::vector<std::size_t> weight(sizes.begin(), sizes.end());
  std::size_t to_split = target;
  if (target >= nonempty) {
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      if (sizes[i] > 0) {
        alloc[i] = 1;
        weight[i] = sizes[i] - 1;
      }
    }
    to_split -= nonempty;
  }
  const std::size_t weight_sum = std::accumulate(weight.begin(), weight.end(), std::size_t{0});
  if (to_split == 0 || weight_sum == 0) return alloc;

  // Exact integer quotas: to_split * w / W = floor + remainder / W.
  std::vector<std::size_t> remainder(sizes.size());
  std::size_t handed = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto q = static_cast<unsigned __int128>(to_split) * weight[i];
    alloc[i] += static_cast<std::size_t>(q / weight_sum);
    handed += static_cast<std::size_t>(q / weight_sum);
    remainder[i] = static_cast<std::size_t>(q % weight_sum);
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t r = 0; handed < to_split && r < order.size(); ++r) {
    ++alloc[order[r]];
    ++handed;
  }
  return alloc;
}

/// One cluster's input to selection when similarities are already known.
struct ClusterSimilarity {
  int cluster = 0;
  std::vector<std::uint64_t> pids;
  Eigen::MatrixXd similarity;
};

struct ClusterSelection {
  int cluster = 0;
  SimilarityGraph graph;
  std::size_t allocated = 0;       // first-pass budget
  std::size_t redistributed = 0;   // extra units from the redistribution pass
  std::vector<std::uint64_t> selected;  // selection order
  std::vector<std::uint8_t> membership; // x_v, aligned with graph.nodes()
};

struct SelectionResult {
  std::vector<std::uint64_t> selected;  // cluster order, then selection order
  std::map<int, std::vector<std::uint64_t>> per_cluster;
  std::vector<ClusterSelection> clusters;
  std::size_t budget_total = 0;
  std::size_t budget_used = 0;
};

/// Budgeted per-cluster selection over precomputed similarity matrices. Budget
/// left unused by clusters that run out of nodes is apportioned once more,
/// by size, among clusters that still have selectable nodes.
inline SelectionResult select_from_similarity(std::span<const ClusterSimilarity> clusters, double tau, std::size_t budget,
                                              unsigned threads = 1) {
  if (budget < 1) throw Error(ErrorKind::ConfigInvalid, "budget must be >= 1");
  const std::size_t m = clusters.size();
  std::vector<ClusterSelection> out(m);
  std::vector<std::size_t> sizes(m);
  for (std::size_t c = 0; c < m; ++c) sizes[c] = clusters[c].pids.size();
  const auto first = allocate_budget(sizes, budget);

  // Unbounded greedy runs give each cluster's capacity; bounded selections are prefixes of them.
  std::vector<std::vector<std::uint64_t>> full(m);
  parallel_for(m, threads, [&](std::size_t c) {
    out[c].cluster = clusters[c].cluster;
    out[c].graph = build_graph(clusters[c].pids, clusters[c].similarity, tau);
    out[c].allocated = first[c];
    full[c] = greedy_mis(out[c].graph, kUnbounded);
  });

  std::size_t leftover = 0;
  std::vector<std::size_t> eligible;
  std::vector<std::size_t> eligible_sizes;
  for (std::size_t c = 0; c < m; ++c) {
    if (full[c].size() < first[c]) {
      leftover += first[c] - full[c].size();
    } else if (full[c].size() > first[c]) {
      eligible.push_back(c);
      eligible_sizes.push_back(sizes[c]);
    }
  }
  if (leftover > 0 && !eligible.empty()) {
    const auto extra = allocate_budget(eligible_sizes, leftover);
    for (std::size_t e = 0; e < eligible.size(); ++e) {
      const std::size_t c = eligible[e];
      out[c].redistributed = std::min(extra[e], full[c].size() - first[c]);
    }
  }

  SelectionResult result;
  result.budget_total = budget;
  for (std::size_t c = 0; c < m; ++c) {
    auto& cs = out[c];
    const std::size_t take = std::min(full[c].size(), cs.allocated + cs.redistributed);
    cs.selected.assign(full[c].begin(), full[c].begin() + static_cast<std::ptrdiff_t>(take));
    cs.membership.assign(cs.graph.size(), 0);
    for (std::uint64_t pid : cs.selected) cs.membership[cs.graph.index_of(pid)] = 1;
    result.per_cluster[cs.cluster] = cs.selected;
    result.selected.insert(result.selected.end(), cs.selected.begin(), cs.selected.end());
  }
  result.budget_used = result.selected.size();
  result.clusters = std::move(out);
  return result;
}

struct ClusterDescriptors {
  int cluster = 0;
  std::vector<DescriptorSet> images;  // pid carried by each set
};

struct SelectionParams {
  double tau = 0.5;
  double sigma_d = 0.4;
  double ratio = 0.8;
  std::size_t budget = 10;
  unsigned threads = 1;
};

/// Computes per-cluster pair similarities from descriptors, then selects.
inline SelectionResult select_representatives(std::span<const ClusterDescriptors> clusters, const SelectionParams& p) {
  std::vector<ClusterSimilarity> sims;
  sims.reserve(clusters.size());
  for (const auto& c : clusters) {
    if (c.images.empty()) throw Error(ErrorKind::ConstraintViolation, fmt::format("cluster {} is empty", c.cluster));
    ClusterSimilarity cs{c.cluster, {}, similarity_matrix(c.images, p.sigma_d, p.ratio, p.threads)};
    for (const auto& d : c.images) cs.pids.push_back(d.pid);
    sims.push_back(std::move(cs));
  }
  return select_from_similarity(sims, p.tau, p.budget, p.threads);
}

/// Smallest threshold, among the distinct positive off-diagonal similarity
/// values of all clusters, at which the unbounded greedy selections together
/// reach `budget` nodes. This is the strictest redundancy threshold that still
/// admits `budget` representatives. Falls back to 1.0 when none reaches it.
inline double calibrate_tau(std::span<const ClusterSimilarity> clusters, std::size_t budget) {
  std::vector<double> candidates;
  for (const auto& c : clusters) {
    const auto& s = c.similarity;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
        if (s(i, j) > 0.0) candidates.push_back(std::min(s(i, j), 1.0));
      }
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (double t : candidates) {
    std::size_t reach = 0;
    for (const auto& c : clusters) {
      reach += greedy_mis(build_graph(c.pids, c.similarity, t), kUnbounded).size();
      if (reach >= budget) return t;
    }
  }
  return 1.0;
}

inline double calibrate_tau(std::span<const std::uint64_t> pids, const Eigen::MatrixXd& similarity, std::size_t budget) {
  const ClusterSimilarity one{0, std::vector<std::uint64_t>(pids.begin(), pids.end()), similarity};
  return calibrate_tau(std::span<const ClusterSimilarity>(&one, 1), budget);
}

}  // namespace triselect
