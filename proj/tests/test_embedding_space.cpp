// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "spksim/embedding_space.hpp"
#include "spksim/random.hpp"
#include "spksim/synthetic.hpp"
#include "test_util.hpp"

using namespace spksim;
using spksim::testing::error_code_of;
using spksim::testing::error_message_of;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
  return r;
}

}  // namespace

TEST(Distance, ThreeFourFive) {
  const std::vector<double> a{0, 0};
  const std::vector<double> b{3, 4};
  EXPECT_EQ(euclidean(a, b), 5.0);
  EXPECT_EQ(distance(DistanceMetric::euclidean, b, a), 5.0);
}

TEST(Distance, CosineHandCases) {
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{2, 0}), 0.0);
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 1.0);
  EXPECT_EQ(cosine_distance(std::vector<double>{1, 0}, std::vector<double>{-1, 0}), 2.0);
}

TEST(Distance, Errors) {
  EXPECT_EQ(error_code_of([] { cosine_distance(std::vector<double>{0, 0}, std::vector<double>{1, 0}); }),
            ErrorCode::invalid_argument);
  EXPECT_EQ(error_code_of([] { euclidean(std::vector<double>{0, 0}, std::vector<double>{1, 0, 0}); }),
            ErrorCode::dimension_mismatch);
  EXPECT_EQ(error_code_of([] { unit_normalized(std::vector<double>{0, 0}); }), ErrorCode::invalid_argument);
  const auto msg = error_message_of([] { parse_distance_metric("manhattan"); });
  EXPECT_NE(msg.find("manhattan"), std::string::npos);
  EXPECT_NE(msg.find("euclidean"), std::string::npos);
  EXPECT_NE(msg.find("cosine"), std::string::npos);
}

TEST(Distance, MetricProperties) {
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = random_vec(rng, 6);
    const auto b = random_vec(rng, 6);
    const auto c = random_vec(rng, 6);
    EXPECT_EQ(euclidean(a, b), euclidean(b, a));
    EXPECT_EQ(euclidean(a, a), 0.0);
    EXPECT_LE(euclidean(a, c), euclidean(a, b) + euclidean(b, c) + 1e-12);
    const double cd = cosine_distance(a, b);
    EXPECT_GE(cd, 0.0);
    EXPECT_LE(cd, 2.0);
    EXPECT_NEAR(cd, cosine_distance(b, a), 1e-15);
    std::vector<double> scaled(a);
    const double k = rng.uniform(0.01, 100.0);
    for (auto& x : scaled) x *= k;
    EXPECT_NEAR(cosine_distance(scaled, b), cd, 1e-12);
    EXPECT_NEAR(l2_norm(unit_normalized(a)), 1.0, 1e-15);
  }
}

TEST(Distance, UnitVectorsOrderAlikeUnderBothMetrics) {
  // On the unit sphere, ||a - b||^2 = 2 * (1 - cos), so the two metrics rank
  // pairs identically.
  Rng rng(2);
  std::vector<double> eu;
  std::vector<double> co;
  for (int i = 0; i < 100; ++i) {
    const auto a = unit_normalized(random_vec(rng, 5));
    const auto b = unit_normalized(random_vec(rng, 5));
    eu.push_back(euclidean(a, b));
    co.push_back(cosine_distance(a, b));
    EXPECT_NEAR(eu.back() * eu.back(), 2.0 * co.back(), 1e-12);
  }
  EXPECT_NEAR(pearson(ranks(eu), ranks(co)), 1.0, 1e-12);
}

TEST(Baseline, ZeroNoiseWorldIsStronglyNegative) {
  SyntheticWorldConfig cfg;
  cfg.n_examples = 500;
  cfg.listener_bias_sd = 0.0;
  cfg.listener_noise_sd = 0.0;
  const auto w = generate_synthetic(cfg);
  EXPECT_LE(baseline_correlation(w.dataset, DistanceMetric::cosine), -0.95);
}

TEST(Baseline, EqualMeansAreZeroVariance) {
  EvaluationDataset ds;
  ds.add_embedding({"a", {1, 0}});
  ds.add_embedding({"b", {0, 1}});
  ds.add_embedding({"c", {1, 1}});
  ds.add_example({"e1", "c", "s", "t", "a", "b", {{"L", 50.0}}});
  ds.add_example({"e2", "c", "s", "t", "a", "c", {{"L", 50.0}}});
  EXPECT_EQ(error_code_of([&] { baseline_correlation(ds, DistanceMetric::cosine); }), ErrorCode::zero_variance);
}

TEST(Baseline, InvariantToExampleOrder) {
  SyntheticWorldConfig cfg;
  cfg.n_examples = 120;
  const auto w = generate_synthetic(cfg);
  std::vector<std::size_t> perm(w.dataset.examples().size());
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(3);
  rng.shuffle(perm);
  EvaluationDataset shuffled;
  for (const auto& e : w.dataset.embeddings()) shuffled.add_embedding(e);
  for (auto i : perm) shuffled.add_example(w.dataset.examples()[i]);
  for (auto m : {DistanceMetric::cosine, DistanceMetric::euclidean}) {
    EXPECT_NEAR(baseline_correlation(shuffled, m), baseline_correlation(w.dataset, m), 1e-12);
  }
}

TEST(Baseline, NormalizeFirstMatchesUnitInputs) {
  const auto ds = spksim::testing::two_example_fixture();
  const auto d = example_distances(ds, DistanceMetric::euclidean, true);
  const auto& ex = ds.examples()[1];
  const auto a = unit_normalized(ds.embedding(ex.source_embedding_id).vector);
  const auto b = unit_normalized(ds.embedding(ex.reference_embedding_id).vector);
  EXPECT_DOUBLE_EQ(d[1], euclidean(a, b));
  // Cosine distance ignores the flag.
  const auto c0 = example_distances(ds, DistanceMetric::cosine, false);
  const auto c1 = example_distances(ds, DistanceMetric::cosine, true);
  for (std::size_t i = 0; i < c0.size(); ++i) EXPECT_NEAR(c0[i], c1[i], 1e-15);
}
