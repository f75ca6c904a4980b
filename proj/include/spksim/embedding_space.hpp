// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_EMBEDDING_SPACE_HPP
#define SPKSIM_EMBEDDING_SPACE_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spksim/dataset.hpp"
#include "spksim/error.hpp"
#include "spksim/score_stats.hpp"

namespace spksim {

enum class DistanceMetric { euclidean, cosine };

inline std::string_view to_string(DistanceMetric m) {
  return m == DistanceMetric::euclidean ? "euclidean" : "cosine";
}

inline DistanceMetric parse_distance_metric(std::string_view name) {
  if (name == "euclidean") return DistanceMetric::euclidean;
  if (name == "cosine") return DistanceMetric::cosine;
  throw Error(ErrorCode::invalid_argument,
              "unknown metric '" + std::string(name) + "' (valid: euclidean, cosine)");
}

namespace detail {
inline void check_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::dimension_mismatch, "vector dimensions differ (" + std::to_string(a.size()) +
                                                   " vs " + std::to_string(b.size()) + ")");
  }
}
}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// 1 - cos(a, b), in [0, 2]. Zero-norm inputs are rejected.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  detail::check_same_dim(a, b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::invalid_argument, "cosine distance of a zero-norm vector");
  }
  const double cos = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  return 1.0 - cos;
}

inline double distance(DistanceMetric metric, std::span<const double> a, std::span<const double> b) {
  return metric == DistanceMetric::euclidean ? euclidean(a, b) : cosine_distance(a, b);
}

inline std::vector<double> unit_normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) throw Error(ErrorCode::invalid_argument, "cannot normalize a zero-norm vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

/// distance(source, reference) for each example, in dataset order.
inline std::vector<double> example_distances(const EvaluationDataset& ds, DistanceMetric metric,
                                             bool normalize_first = false) {
  std::vector<double> out;
  out.reserve(ds.examples().size());
  for (const auto& ex : ds.examples()) {
    const auto& src = ds.embedding(ex.source_embedding_id).vector;
    const auto& ref = ds.embedding(ex.reference_embedding_id).vector;
    if (normalize_first) {
      out.push_back(distance(metric, unit_normalized(src), unit_normalized(ref)));
    } else {
      out.push_back(distance(metric, src, ref));
    }
  }
  return out;
}

/// Pearson correlation between per-example embedding distance and the mean
/// listener score. Sign is preserved, so a useful metric gives r < 0.
inline double baseline_correlation(const EvaluationDataset& ds, DistanceMetric metric,
                                   bool normalize_first = false) {
  if (ds.examples().size() < 2) {
    throw Error(ErrorCode::invalid_argument, "baseline correlation needs at least two examples");
  }
  const auto dists = example_distances(ds, metric, normalize_first);
  std::vector<double> means;
  means.reserve(ds.examples().size());
  for (const auto& ex : ds.examples()) means.push_back(distribution_of(ex).mean);
  return pearson(dists, means);
}

}  // namespace spksim

#endif  // SPKSIM_EMBEDDING_SPACE_HPP
