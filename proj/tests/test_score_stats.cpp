// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "spksim/random.hpp"
#include "spksim/score_stats.hpp"
#include "spksim/synthetic.hpp"
#include "test_util.hpp"

using namespace spksim;
using spksim::testing::error_code_of;

namespace {

// Oracles: textbook formulas evaluated in long double.

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

EvaluationExample example_with(std::vector<double> scores) {
  EvaluationExample ex;
  ex.example_id = "e";
  for (std::size_t i = 0; i < scores.size(); ++i) ex.scores.push_back({"L" + std::to_string(i), scores[i]});
  return ex;
}

}  // namespace

TEST(Distribution, ConstantScores) {
  const auto d = distribution_of(example_with({50, 50, 50}));
  EXPECT_EQ(d.mean, 50.0);
  EXPECT_EQ(d.sd, 0.0);
}

TEST(Distribution, TwoPointUsesPopulationConvention) {
  const auto d = distribution_of(example_with({40, 60}));
  EXPECT_DOUBLE_EQ(d.mean, 50.0);
  EXPECT_DOUBLE_EQ(d.sd, 10.0);
}

TEST(Distribution, MatchesTwoPassOracle) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto scores = random_vector(rng, 20, 0.0, 100.0);
    const auto d = make_distribution("x", scores);
    long double m = 0;
    for (double s : scores) m += s;
    m /= scores.size();
    long double v = 0;
    for (double s : scores) v += (s - m) * (s - m);
    const double sd = static_cast<double>(std::sqrt(v / scores.size()));
    EXPECT_NEAR(d.mean, static_cast<double>(m), 1e-12 * static_cast<double>(m));
    EXPECT_NEAR(d.sd, sd, 1e-12 * sd);
  }
}

TEST(Distribution, EmptyScoresRejected) {
  EXPECT_EQ(error_code_of([] { make_distribution("e", {}); }), ErrorCode::empty_input);
}

TEST(Pearson, PerfectLinearRelations) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_DOUBLE_EQ(pearson(x, std::vector<double>{2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(pearson(x, std::vector<double>{3, 2, 1}), -1.0);
}

TEST(Pearson, MatchesLongDoubleOracle) {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto x = random_vector(rng, 1000, -5.0, 5.0);
    auto y = random_vector(rng, 1000, -5.0, 5.0);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.3 * rep / 100.0 * x[i];
    EXPECT_NEAR(pearson(x, y), oracle_pearson(x, y), 1e-10);
  }
}

TEST(Pearson, SymmetricAndAffineInvariant) {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto x = random_vector(rng, 30, 0.0, 1.0);
    const auto y = random_vector(rng, 30, 0.0, 1.0);
    const double r = pearson(x, y);
    EXPECT_NEAR(r, pearson(y, x), 1e-12);
    std::vector<double> xa(x);
    const double a = rng.uniform(0.1, 10.0);
    const double b = rng.uniform(-50.0, 50.0);
    for (auto& v : xa) v = a * v + b;
    EXPECT_NEAR(pearson(xa, y), r, 1e-10);
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Pearson, Errors) {
  EXPECT_EQ(error_code_of([] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }),
            ErrorCode::length_mismatch);
  EXPECT_EQ(error_code_of([] { pearson(std::vector<double>{1}, std::vector<double>{1}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }),
            ErrorCode::zero_variance);
}

TEST(Rmse, HandCasesAndOracle) {
  EXPECT_EQ(rmse(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), 0.0);
  EXPECT_EQ(rmse(std::vector<double>{0}, std::vector<double>{10}), 10.0);
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const auto p = random_vector(rng, 57, 0.0, 100.0);
    const auto t = random_vector(rng, 57, 0.0, 100.0);
    long double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - t[i]) * (p[i] - t[i]);
    const double oracle = static_cast<double>(std::sqrt(acc / p.size()));
    EXPECT_NEAR(rmse(p, t), oracle, 1e-12 * oracle);
  }
  EXPECT_EQ(error_code_of([] { rmse(std::vector<double>{}, std::vector<double>{}); }), ErrorCode::empty_input);
  EXPECT_EQ(error_code_of([] { rmse(std::vector<double>{1}, std::vector<double>{1, 2}); }),
            ErrorCode::length_mismatch);
}

TEST(Accuracy, HandCases) {
  const auto d = make_distribution("a", {50, 70});  // mean 60, sd 10
  std::map<std::string, ScoreDistribution> dists{{"a", d}};
  EXPECT_EQ(accuracy_within_sigma({{"a", 60.0}}, dists), 1.0);
  EXPECT_EQ(accuracy_within_sigma({{"a", 71.0}}, dists), 0.0);
  EXPECT_EQ(accuracy_within_sigma({{"a", 70.0}}, dists), 1.0);  // boundary counts
  EXPECT_EQ(accuracy_within_sigma({{"a", 49.0}}, dists), 0.0);

  const auto flat = make_distribution("f", {40, 40});
  std::map<std::string, ScoreDistribution> fd{{"f", flat}};
  EXPECT_EQ(accuracy_within_sigma({{"f", 40.0}}, fd), 1.0);
  EXPECT_EQ(accuracy_within_sigma({{"f", 40.000001}}, fd), 0.0);
  EXPECT_EQ(error_code_of([&] { accuracy_within_sigma({{"zz", 1.0}}, dists); }), ErrorCode::unknown_id);
}

TEST(Accuracy, ConstructedWithinBandSet) {
  Rng rng(5);
  std::map<std::string, double> preds;
  std::map<std::string, ScoreDistribution> dists;
  for (int i = 0; i < 100; ++i) {
    const auto id = "e" + std::to_string(i);
    auto d = make_distribution(id, random_vector(rng, 10, 0.0, 100.0));
    preds[id] = d.mean + (rng.bernoulli(0.5) ? 0.5 : -0.5) * d.sd;
    dists[id] = std::move(d);
  }
  EXPECT_EQ(accuracy_within_sigma(preds, dists), 1.0);
}

namespace {

std::vector<double> oracle_density_weights(const std::vector<double>& means, double bw, double eps) {
  // Counts partners by scanning bins as explicit intervals [k*bw, (k+1)*bw),
  // with the top bin closed at 100.
  const int n_bins = static_cast<int>(std::ceil(100.0 / bw));
  auto in_bin = [&](double m, int k) {
    const double lo = k * bw;
    const double hi = (k + 1) * bw;
    if (k == n_bins - 1) return m >= lo && m <= 100.0;
    return m >= lo && m < hi;
  };
  std::vector<double> w;
  for (double m : means) {
    int bin = -1;
    for (int k = 0; k < n_bins && bin < 0; ++k) {
      if (in_bin(m, k)) bin = k;
    }
    int count = 0;
    for (double o : means) count += in_bin(o, bin) ? 1 : 0;
    w.push_back(1.0 / (count + eps));
  }
  long double s = 0;
  for (double x : w) s += x;
  for (double& x : w) x = static_cast<double>(x / (s / w.size()));
  return w;
}

}  // namespace

TEST(DensityWeights, SingleBinGivesUnitWeights) {
  const auto w = density_weights(std::vector<double>{41, 42, 43.5}, 5.0, 1.0);
  for (double x : w) EXPECT_DOUBLE_EQ(x, 1.0);
}

TEST(DensityWeights, HandComputedHistogram) {
  // Occupancy 3 and 1 gives raw weights 1/3 and 1; normalizing to mean one
  // yields 2/3 and 2.
  const auto w = density_weights(std::vector<double>{10, 10, 10, 90}, 5.0, 0.0);
  ASSERT_EQ(w.size(), 4u);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[2], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[3], 2.0, 1e-15);
}

TEST(DensityWeights, MatchesIntervalScanOracle) {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    auto means = random_vector(rng, 80, 0.0, 100.0);
    means[0] = 100.0;
    means[1] = 0.0;
    means[2] = 5.0;  // bin boundary
    const double bw = rep % 2 ? 5.0 : 7.5;
    const double eps = rep % 3 ? 1.0 : 0.0;
    const auto w = density_weights(means, bw, eps);
    const auto o = oracle_density_weights(means, bw, eps);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], o[i], 1e-10);
    const double avg = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
    EXPECT_NEAR(avg, 1.0, 1e-12);
    for (double x : w) EXPECT_GT(x, 0.0);
  }
}

TEST(DensityWeights, PermutationEquivariant) {
  Rng rng(7);
  auto means = random_vector(rng, 40, 0.0, 100.0);
  const auto w = density_weights(means);
  std::vector<std::size_t> perm(means.size());
  std::iota(perm.begin(), perm.end(), 0u);
  rng.shuffle(perm);
  std::vector<double> pm;
  for (auto i : perm) pm.push_back(means[i]);
  const auto pw = density_weights(pm);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_DOUBLE_EQ(pw[k], w[perm[k]]);
}

TEST(DensityWeights, Errors) {
  EXPECT_EQ(error_code_of([] { density_weights(std::vector<double>{}); }), ErrorCode::empty_input);
  EXPECT_EQ(error_code_of([] { density_weights(std::vector<double>{50}, 0.0); }), ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { density_weights(std::vector<double>{101}); }), ErrorCode::score_out_of_range);
}

TEST(Histogram, HandCases) {
  const auto h = histogram(std::vector<double>{1, 1, 1}, std::vector<double>{0, 2});
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{3}));
  const auto e = histogram(std::vector<double>{}, std::vector<double>{0, 1, 2});
  EXPECT_EQ(e.counts, (std::vector<std::size_t>{0, 0}));
  EXPECT_EQ(e.total(), 0u);
  const auto b = histogram(std::vector<double>{-1, 0, 1, 2, 3}, std::vector<double>{0, 1, 2});
  EXPECT_EQ(b.counts, (std::vector<std::size_t>{1, 1}));
  EXPECT_EQ(b.underflow, 1u);
  EXPECT_EQ(b.overflow, 2u);
  EXPECT_EQ(error_code_of([] { histogram(std::vector<double>{}, std::vector<double>{0, 0}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { histogram(std::vector<double>{}, std::vector<double>{1}); }),
            ErrorCode::invalid_argument);
}

TEST(Histogram, MatchesLinearScanOracle) {
  Rng rng(8);
  for (int rep = 0; rep < 100; ++rep) {
    const auto values = random_vector(rng, 300, -20.0, 120.0);
    std::vector<double> edges{0.0};
    while (edges.back() < 100.0) edges.push_back(edges.back() + rng.uniform(1.0, 15.0));
    const auto h = histogram(values, edges);
    std::vector<std::size_t> counts(edges.size() - 1, 0);
    std::size_t under = 0;
    std::size_t over = 0;
    for (double v : values) {
      bool placed = false;
      for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        if (v >= edges[b] && v < edges[b + 1]) {
          ++counts[b];
          placed = true;
        }
      }
      if (!placed) (v < edges.front() ? under : over)++;
    }
    EXPECT_EQ(h.counts, counts);
    EXPECT_EQ(h.underflow, under);
    EXPECT_EQ(h.overflow, over);
    EXPECT_EQ(h.total(), values.size());
  }
}

TEST(ScorePredictions, ReportFields) {
  const auto a = make_distribution("a", {50, 70});
  const auto b = make_distribution("b", {10, 20});
  const auto c = make_distribution("c", {90, 90});
  const ScoreDistribution* dists[] = {&a, &b, &c};
  const std::vector<double> preds{60, 30, 90};
  const auto r = score_predictions(preds, dists);
  EXPECT_EQ(r.n, 3u);
  EXPECT_DOUBLE_EQ(r.accuracy, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt((0.0 + 225.0 + 0.0) / 3.0));
  EXPECT_NEAR(r.pearson, oracle_pearson(preds, {60, 15, 90}), 1e-12);
  const auto j = to_json(r);
  EXPECT_EQ(j.size(), 6u);
  for (const char* key : {"pearson", "avg_pearson_mean", "avg_pearson_sd", "accuracy", "rmse", "n"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(UpperBound, ZeroNoiseIsExact) {
  SyntheticWorldConfig cfg;
  cfg.n_examples = 200;
  cfg.listener_bias_sd = 0.0;
  cfg.listener_noise_sd = 0.0;
  const auto w = generate_synthetic(cfg);
  const auto ub = listener_split_upper_bound(w.dataset, 10, 3);
  EXPECT_NEAR(ub.pearson_mean, 1.0, 1e-12);
  EXPECT_EQ(ub.rmse, 0.0);
  EXPECT_EQ(ub.accuracy, 1.0);
}

TEST(UpperBound, TrialSeedsIndependentOfTrialCount) {
  SyntheticWorldConfig cfg;
  cfg.n_examples = 100;
  const auto w = generate_synthetic(cfg);
  const auto one = listener_split_upper_bound(w.dataset, 1, 42);
  const auto many = listener_split_upper_bound(w.dataset, 20, 42);
  EXPECT_EQ(one.trial_pearsons[0], many.trial_pearsons[0]);
  const auto again = listener_split_upper_bound(w.dataset, 1, 42);
  EXPECT_EQ(to_json(one).dump(), to_json(again).dump());
}

TEST(UpperBound, OddListenerCountsSplitCeilHalf) {
  // Scores (0, 0, h): with two listeners in group A every split misses, since
  // B then holds one score and has sd 0. A one-listener A group would hit
  // whenever it drew a 0 against B = {0, h}.
  EvaluationDataset ds;
  ds.add_embedding({"x", {1, 0}});
  const double tops[] = {90, 60, 30};
  for (int e = 0; e < 3; ++e) {
    ds.add_example({"e" + std::to_string(e), "c", "s", "t", "x", "x",
                    {{"a", 0.0}, {"b", 0.0}, {"c", tops[e]}}});
  }
  ds.add_example({"e3", "c", "s", "t", "x", "x", {{"a", 10.0}, {"b", 10.0}, {"c", 80.0}}});
  const auto ub = listener_split_upper_bound(ds, 25, 1);
  EXPECT_EQ(ub.accuracy, 0.0);

  EvaluationDataset one;
  one.add_embedding({"x", {1, 0}});
  one.add_example({"e", "c", "s", "t", "x", "x", {{"a", 10.0}}});
  one.add_example({"f", "c", "s", "t", "x", "x", {{"a", 20.0}}});
  EXPECT_EQ(error_code_of([&] { listener_split_upper_bound(one, 3, 1); }), ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([&] { listener_split_upper_bound(ds, 0, 1); }), ErrorCode::invalid_argument);
}

TEST(UpperBound, MoreNoiseLowersAgreement) {
  // Three noise levels; per-level 95% intervals from 30 trials must not overlap.
  std::vector<std::pair<double, double>> ci;
  for (double noise : {5.0, 15.0, 30.0}) {
    SyntheticWorldConfig cfg;
    cfg.n_examples = 300;
    cfg.listener_noise_sd = noise;
    cfg.listener_bias_sd = 0.0;
    cfg.rng_seed = 9;
    const auto ub = listener_split_upper_bound(generate_synthetic(cfg).dataset, 30, 4);
    const double half = 1.96 * ub.pearson_sd / std::sqrt(30.0);
    ci.emplace_back(ub.pearson_mean - half, ub.pearson_mean + half);
  }
  EXPECT_GT(ci[0].first, ci[1].second);
  EXPECT_GT(ci[1].first, ci[2].second);
}
