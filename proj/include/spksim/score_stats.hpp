// SPDX-License-Identifier: Apache-2.0
#ifndef SPKSIM_SCORE_STATS_HPP
#define SPKSIM_SCORE_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "spksim/dataset.hpp"
#include "spksim/error.hpp"
#include "spksim/random.hpp"

namespace spksim {

/// Listener scores of one example, with E(X) and population sigma(X).
struct ScoreDistribution {
  std::string example_id;
  std::vector<double> raw;
  double mean = 0.0;
  double sd = 0.0;
};

/// Arithmetic mean, accumulated as offsets from the first element so that a
/// constant input returns that constant exactly.
inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorCode::empty_input, "mean of an empty sequence");
  const double origin = xs[0];
  double acc = 0.0;
  for (double x : xs) acc += x - origin;
  return origin + acc / static_cast<double>(xs.size());
}

/// Population standard deviation (divide by N) about `mean`.
inline double population_sd(std::span<const double> xs, double mean) {
  if (xs.empty()) throw Error(ErrorCode::empty_input, "sd of an empty sequence");
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

/// Sample standard deviation (divide by N-1); 0 for fewer than two values.
inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

inline ScoreDistribution make_distribution(std::string example_id, std::vector<double> raw) {
  if (raw.empty()) {
    throw Error(ErrorCode::empty_input, "example '" + example_id + "' has no scores");
  }
  ScoreDistribution d;
  d.example_id = std::move(example_id);
  d.raw = std::move(raw);
  d.mean = mean_of(d.raw);
  d.sd = population_sd(d.raw, d.mean);
  return d;
}

inline ScoreDistribution distribution_of(const EvaluationExample& example) {
  std::vector<double> raw;
  raw.reserve(example.scores.size());
  for (const auto& s : example.scores) raw.push_back(s.score);
  return make_distribution(example.example_id, std::move(raw));
}

inline std::vector<ScoreDistribution> distributions_of(const EvaluationDataset& ds) {
  std::vector<ScoreDistribution> out;
  out.reserve(ds.examples().size());
  for (const auto& ex : ds.examples()) out.push_back(distribution_of(ex));
  return out;
}

/// Product-moment correlation. Length mismatch, fewer than two points and a
/// constant input are errors rather than a silent 0 or NaN.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::length_mismatch, "pearson: lengths differ (" + std::to_string(x.size()) +
                                                " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw Error(ErrorCode::invalid_argument, "pearson: need at least two points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::zero_variance, "pearson: zero variance in input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw Error(ErrorCode::length_mismatch, "rmse: lengths differ");
  }
  if (pred.empty()) throw Error(ErrorCode::empty_input, "rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

/// True iff |pred - mean| <= sd. With sd == 0 only an exact hit counts.
inline bool within_sigma(double pred, const ScoreDistribution& dist) {
  return std::abs(pred - dist.mean) <= dist.sd;
}

/// Fraction of predictions that fall inside one standard deviation of the
/// example's mean listener score.
inline double accuracy_within_sigma(const std::map<std::string, double>& preds,
                                    const std::map<std::string, ScoreDistribution>& dists) {
  if (preds.empty()) throw Error(ErrorCode::empty_input, "accuracy: no predictions");
  std::size_t hits = 0;
  for (const auto& [id, pred] : preds) {
    auto it = dists.find(id);
    if (it == dists.end()) {
      throw Error(ErrorCode::unknown_id, "accuracy: no distribution for prediction '" + id + "'");
    }
    if (within_sigma(pred, it->second)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Inverse-density weights: w_i = C / (count(bin(mean_i)) + epsilon) with C
/// chosen so the weights average to one. Bins of `bin_width` tile [0, 100];
/// a mean of exactly 100 falls in the last bin.
inline std::vector<double> density_weights(std::span<const double> means, double bin_width = 5.0,
                                           double epsilon = 1.0) {
  if (means.empty()) throw Error(ErrorCode::empty_input, "density_weights: empty input");
  if (!(bin_width > 0.0)) throw Error(ErrorCode::invalid_argument, "density_weights: bin_width must be > 0");
  if (!(epsilon >= 0.0)) throw Error(ErrorCode::invalid_argument, "density_weights: epsilon must be >= 0");
  const auto n_bins = static_cast<std::size_t>(std::ceil((kMaxScore - kMinScore) / bin_width));
  auto bin_of = [&](double m) {
    if (!(m >= kMinScore && m <= kMaxScore)) {
      throw Error(ErrorCode::score_out_of_range, "density_weights: mean outside [0, 100]");
    }
    auto b = static_cast<std::size_t>(std::floor((m - kMinScore) / bin_width));
    return std::min(b, n_bins - 1);
  };
  std::vector<std::size_t> counts(n_bins, 0);
  for (double m : means) ++counts[bin_of(m)];
  std::vector<double> w;
  w.reserve(means.size());
  for (double m : means) w.push_back(1.0 / (static_cast<double>(counts[bin_of(m)]) + epsilon));
  const double avg = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (double& x : w) x /= avg;
  return w;
}

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t total() const {
    return std::accumulate(counts.begin(), counts.end(), underflow + overflow);
  }
};

/// Counts per half-open bin [e_i, e_{i+1}). Values below the first edge go to
/// underflow, values at or above the last edge to overflow.
inline Histogram histogram(std::span<const double> values, std::span<const double> edges) {
  if (edges.size() < 2) throw Error(ErrorCode::invalid_argument, "histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw Error(ErrorCode::invalid_argument, "histogram: bin edges must be strictly increasing");
    }
  }
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double v : values) {
    if (v < edges.front()) {
      ++h.underflow;
    } else if (!(v < edges.back())) {
      ++h.overflow;  // also catches NaN
    } else {
      const auto it = std::upper_bound(edges.begin(), edges.end(), v);
      ++h.counts[static_cast<std::size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

inline std::vector<double> uniform_edges(double lo, double hi, std::size_t n_bins) {
  if (n_bins == 0 || !(hi > lo)) throw Error(ErrorCode::invalid_argument, "uniform_edges: bad range");
  std::vector<double> e(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i) {
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
  }
  return e;
}

/// Table-2 style metrics. `avg_pearson_*` summarise per-fold correlations and
/// are only meaningful for pooled cross-validation reports.
struct MetricReport {
  double pearson = std::numeric_limits<double>::quiet_NaN();
  double avg_pearson_mean = std::numeric_limits<double>::quiet_NaN();
  double avg_pearson_sd = std::numeric_limits<double>::quiet_NaN();
  double accuracy = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["pearson"] = r.pearson;
  j["avg_pearson_mean"] = r.avg_pearson_mean;
  j["avg_pearson_sd"] = r.avg_pearson_sd;
  j["accuracy"] = r.accuracy;
  j["rmse"] = r.rmse;
  j["n"] = r.n;
  return j;
}

/// Metrics of `preds` against the distributions `dists` (same order).
/// Pearson is taken against the distribution means; zero variance throws.
inline MetricReport score_predictions(std::span<const double> preds,
                                      std::span<const ScoreDistribution* const> dists) {
  if (preds.size() != dists.size()) throw Error(ErrorCode::length_mismatch, "score_predictions: lengths differ");
  MetricReport r;
  r.n = preds.size();
  std::vector<double> means;
  means.reserve(dists.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    means.push_back(dists[i]->mean);
    if (within_sigma(preds[i], *dists[i])) ++hits;
  }
  r.accuracy = preds.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(preds.size());
  r.rmse = rmse(preds, means);
  r.pearson = pearson(preds, means);
  return r;
}

struct UpperBound {
  double pearson_mean = 0.0;
  double pearson_sd = 0.0;
  double accuracy = 0.0;
  double rmse = 0.0;
  std::vector<double> trial_pearsons;
};

inline nlohmann::ordered_json to_json(const UpperBound& u) {
  nlohmann::ordered_json j;
  j["pearson_mean"] = u.pearson_mean;
  j["pearson_sd"] = u.pearson_sd;
  j["accuracy"] = u.accuracy;
  j["rmse"] = u.rmse;
  return j;
}

/// Listener-agreement ceiling. For each trial every example's listeners are
/// shuffled and split into group A (ceil(N/2) listeners) and group B; the
/// trial's Pearson is taken between the per-example A and B means. Accuracy
/// scores A means as predictions against B's distributions, and RMSE is
/// between the two sets of group means. Trial t uses seed derive_seed(seed, t),
/// so the first trials do not depend on n_trials.
inline UpperBound listener_split_upper_bound(const EvaluationDataset& ds, std::size_t n_trials,
                                             std::uint64_t seed) {
  if (n_trials == 0) throw Error(ErrorCode::invalid_argument, "upper bound: n_trials must be >= 1");
  for (const auto& ex : ds.examples()) {
    if (ex.scores.size() < 2) {
      throw Error(ErrorCode::invalid_argument,
                  "upper bound: example '" + ex.example_id + "' has fewer than 2 scores");
    }
  }
  const std::size_t n = ds.examples().size();
  UpperBound out;
  double acc_sum = 0.0;
  double rmse_sum = 0.0;
  std::vector<double> mean_a(n);
  std::vector<double> mean_b(n);
  std::vector<double> group_a;
  std::vector<double> group_b;
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < n_trials; ++t) {
    Rng rng(derive_seed(seed, t));
    std::size_t hits = 0;
    for (std::size_t e = 0; e < n; ++e) {
      const auto& scores = ds.examples()[e].scores;
      order.resize(scores.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      const std::size_t na = (scores.size() + 1) / 2;
      group_a.clear();
      group_b.clear();
      for (std::size_t i = 0; i < order.size(); ++i) {
        (i < na ? group_a : group_b).push_back(scores[order[i]].score);
      }
      mean_a[e] = mean_of(group_a);
      mean_b[e] = mean_of(group_b);
      if (std::abs(mean_a[e] - mean_b[e]) <= population_sd(group_b, mean_b[e])) ++hits;
    }
    out.trial_pearsons.push_back(pearson(mean_a, mean_b));
    acc_sum += static_cast<double>(hits) / static_cast<double>(n);
    rmse_sum += rmse(mean_a, mean_b);
  }
  out.pearson_mean = mean_of(out.trial_pearsons);
  out.pearson_sd = sample_sd(out.trial_pearsons);
  out.accuracy = acc_sum / static_cast<double>(n_trials);
  out.rmse = rmse_sum / static_cast<double>(n_trials);
  return out;
}

}  // namespace spksim

#endif  // SPKSIM_SCORE_STATS_HPP
