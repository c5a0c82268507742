#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "triselect/error.hpp"
#include "triselect/parallel.hpp"
#include "triselect/sift.hpp"

namespace triselect {

struct Match {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double squared_distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

struct MatchSet {
  std::vector<Match> pairs;
  std::size_t n_matches = 0;
};

/// Squared Euclidean distance with eight fixed partial sums, so the result
/// is reproducible and the loop vectorizes without reassociation.
inline float descriptor_sq_distance(const Descriptor& a, const Descriptor& b) noexcept {
  float acc[8] = {};
  for (int i = 0; i < kDescriptorDim; i += 8) {
    for (int j = 0; j < 8; ++j) {
      const float d = a[static_cast<std::size_t>(i + j)] - b[static_cast<std::size_t>(i + j)];
      acc[j] += d * d;
    }
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

namespace detail {

inline void require_features(const DescriptorSet& s) {
  if (s.empty()) throw PidError(ErrorKind::NoFeatures, s.pid, "descriptor set is empty");
}

inline void require_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorKind::ConfigInvalid, fmt::format("ratio {} outside (0, 1]", ratio));
}

/// Row-major |a| x |b| squared distances.
inline std::vector<float> distance_table(const DescriptorSet& a, const DescriptorSet& b) {
  std::vector<float> t(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) t[i * b.size() + j] = descriptor_sq_distance(a.descriptors[i], b.descriptors[j]);
  }
  return t;
}

/// Nearest/second-nearest scan along one axis of the table. `stride_outer`
/// and `stride_inner` select rows (a -> b) or columns (b -> a). Ties on the
/// nearest distance keep the lower index.
inline MatchSet ratio_matches(const std::vector<float>& table, std::size_t outer, std::size_t inner, std::size_t stride_outer,
                              std::size_t stride_inner, double ratio) {
  MatchSet out;
  const double ratio2 = ratio * ratio;
  for (std::size_t i = 0; i < outer; ++i) {
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < inner; ++j) {
      const double d = table[i * stride_outer + j * stride_inner];
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    if (inner == 1 || best < ratio2 * second) out.pairs.push_back({i, best_j, best});
  }
  out.n_matches = out.pairs.size();
  return out;
}

inline double gaussian_mean(const MatchSet& m, double sigma_d) {
  if (m.pairs.empty()) return 0.0;
  const double denom = 2.0 * sigma_d * sigma_d;
  double sum = 0.0;
  for (const auto& p : m.pairs) sum += std::exp(-p.squared_distance / denom);
  return sum / static_cast<double>(m.pairs.size());
}

}  // namespace detail

/// For each descriptor of `a`, its exact nearest neighbor in `b`, kept when
/// d1 < ratio * d2 (Lowe's ratio test). A lone candidate in `b` always passes.
inline MatchSet match_descriptors(const DescriptorSet& a, const DescriptorSet& b, double ratio) {
  detail::require_features(a);
  detail::require_features(b);
  detail::require_ratio(ratio);
  const auto table = detail::distance_table(a, b);
  return detail::ratio_matches(table, a.size(), b.size(), b.size(), 1, ratio);
}

struct PairSimilarity {
  double value = 0.0;
  std::size_t matches_ab = 0;
  std::size_t matches_ba = 0;
};

inline PairSimilarity pair_similarity_detail(const DescriptorSet& a, const DescriptorSet& b, double sigma_d, double ratio) {
  detail::require_features(a);
  detail::require_features(b);
  detail::require_ratio(ratio);
  if (!(sigma_d > 0.0) || !std::isfinite(sigma_d)) {
    throw Error(ErrorKind::InvalidSigma, fmt::format("descriptor sigma must be > 0, got {}", sigma_d));
  }
  const auto table = detail::distance_table(a, b);
  const MatchSet ab = detail::ratio_matches(table, a.size(), b.size(), b.size(), 1, ratio);
  const MatchSet ba = detail::ratio_matches(table, b.size(), a.size(), 1, b.size(), ratio);
  return {(detail::gaussian_mean(ab, sigma_d) + detail::gaussian_mean(ba, sigma_d)) / 2.0, ab.n_matches, ba.n_matches};
}

/// Mean Gaussian-weighted match quality, averaged over both match directions.
/// A direction without matches contributes 0.
inline double pair_similarity(const DescriptorSet& a, const DescriptorSet& b, double sigma_d, double ratio) {
  return pair_similarity_detail(a, b, sigma_d, ratio).value;
}

/// Symmetric matrix of pair similarities with a unit diagonal.
inline Eigen::MatrixXd similarity_matrix(std::span<const DescriptorSet> sets, double sigma_d, double ratio,
                                         unsigned threads = 1) {
  const std::size_t n = sets.size();
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  parallel_for(pairs.size(), threads, [&](std::size_t idx) {
    const auto [i, j] = pairs[idx];
    const double v = pair_similarity(sets[i], sets[j], sigma_d, ratio);
    s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
  });
  return s;
}

}  // namespace triselect
