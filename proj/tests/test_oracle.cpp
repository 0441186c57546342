// Copyright 2026 The Delta Enrichment Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "delta/cli.hpp"
#include "delta/oracle.hpp"
#include "support.hpp"

using namespace delta;

namespace {

// Two clusters that are mirror images of each other.
struct Mirror {
  Dataset cloud;
  DirectoryBuild build;
};

Mirror mirror_instance() {
  Mirror m;
  const std::vector<FeatureVector> half{{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}};
  for (const auto& f : half) m.cloud.samples.push_back({f, 0});
  for (const auto& f : half) m.cloud.samples.push_back({{50.0 - f[0], 50.0 - f[1]}, 1});
  m.build = build_directory(m.cloud, 1, 1);
  return m;
}

}  // namespace

TEST(Oracle, DegenerateClusterHasZeroGap) {
  Dataset cloud{"c", {{{1.0, 1.0}, 0}, {{1.0, 1.0}, 0}, {{1.0, 1.0}, 0}}};
  const auto b = build_directory(cloud, 1, 1);
  const auto r = oracle_optimal_plan(ContextWeights{1, {{0, 1.0}}, 1}, b.directory, b.assignment, cloud, 3);
  EXPECT_DOUBLE_EQ(r.best_value, 0.0);
  EXPECT_DOUBLE_EQ(r.analytical_value, 0.0);
  EXPECT_DOUBLE_EQ(r.relative_gap(), 0.0);
}

TEST(Oracle, SymmetricClustersGetEqualSizes) {
  const auto m = mirror_instance();
  const auto r = oracle_optimal_plan(ContextWeights{1, {{0, 0.5}, {1, 0.5}}, 1}, m.build.directory, m.build.assignment,
                                     m.cloud, 4);
  EXPECT_EQ(r.analytical_sizes, (std::map<ClusterId, std::size_t>{{0, 2}, {1, 2}}));
  EXPECT_EQ(r.best_sizes, r.analytical_sizes);
  EXPECT_LE(r.relative_gap(), 0.02);
}

TEST(Oracle, RandomInstancesWithinTwoPercent) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto inst = cli::random_oracle_instance(cli::OracleParams{}, derive_seed(0x7e57, i));
    const auto r = oracle_optimal_plan(inst.weights, inst.build.directory, inst.build.assignment, inst.cloud, inst.budget);
    EXPECT_LE(r.relative_gap(), 0.02) << "instance " << i;
    EXPECT_TRUE(std::isfinite(r.best_value));
  }
}

TEST(Oracle, ObjectiveMatchesMonteCarloVariance) {
  // Single cluster: the closed form equals the variance of the anchored estimator.
  const std::vector<FeatureVector> m{{0.0, 0.0}, {1.0, 0.0}, {0.0, 2.0}, {-3.0, 1.0}};
  const auto s = fixtures::single_cluster(m, 0);
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  const auto plan = fixtures::single_plan(s, 2, p, 0.7);
  std::vector<FeatureVector> est;
  for (std::size_t k = 0; k < 20000; ++k)
    est.push_back(anchored_feature_estimate(draw_samples(plan, s.cloud, s.assignment, k), 0, 0.7, m[0]));
  const double exact = detail::plan_variance_exact(plan, s.cloud, m[0]);
  EXPECT_NEAR(fixtures::trace_variance(est), exact, 0.05 * exact);
  // Same value from the oracle's objective.
  const auto moments = detail::cluster_moments(0, 0.7, s.directory, s.assignment, s.cloud);
  const double objective = plan_objective({moments}, {{0, 2}}, {{0, p}});
  FeatureVector mu(2, 0.0);
  for (const auto& f : m) linalg::axpy(0.25, f, mu);
  EXPECT_NEAR(objective - 0.49 * linalg::squared_distance(mu, m[0]) / 2.0, exact, 1e-12);
}

TEST(Oracle, SizeLimits) {
  const auto m = mirror_instance();
  const ContextWeights w{1, {{0, 0.5}, {1, 0.5}}, 1};
  EXPECT_THROW(oracle_optimal_plan(w, m.build.directory, m.build.assignment, m.cloud, kOracleMaxBudget + 1),
               InvalidArgument);
  EXPECT_THROW(oracle_optimal_plan(w, m.build.directory, m.build.assignment, m.cloud, 0), InvalidArgument);
  const auto big = fixtures::blob_cloud(1, 1, kOracleMaxClusterSize + 1, 2);
  const auto bb = build_directory(big, 1, 1);
  EXPECT_THROW(oracle_optimal_plan(ContextWeights{1, {{0, 1.0}}, 1}, bb.directory, bb.assignment, big, 4),
               InvalidArgument);
  const auto many = fixtures::blob_cloud(2, kOracleMaxClusters + 1, 2, 2);
  const auto mb = build_directory(many, 1, 1);
  ContextWeights all{1, {}, 1};
  for (ClusterId c = 0; c < mb.directory.size(); ++c) all.weights.emplace(c, 1.0);
  EXPECT_THROW(oracle_optimal_plan(all, mb.directory, mb.assignment, many, 6), InvalidArgument);
}

TEST(Decomposition, DeviceInsideCloudGivesZeroLeftSide) {
  const auto cloud = fixtures::blob_cloud(3, 2, 4, 3);
  const Dataset device{"d", {cloud.samples[1], cloud.samples[6]}};
  const auto b = build_directory(cloud, 2, 1);
  const auto r = check_decomposition_bound(device, cloud, b.directory, fixtures::random_model(4, 2, 3), 3);
  EXPECT_NEAR(r.lhs, 0.0, 1e-12);
  EXPECT_TRUE(r.holds);
  EXPECT_LE(r.rhs, 0.0);
}

TEST(Decomposition, OneEntryPerSample) {
  const auto cloud = fixtures::blob_cloud(5, 2, 3, 2);
  const auto b = build_directory(cloud, 3, 1);  // every sample is its own entry
  ASSERT_EQ(b.directory.size(), cloud.size());
  const auto device = fixtures::blob_cloud(6, 2, 2, 2);
  const auto r = check_decomposition_bound(device, cloud, b.directory, fixtures::random_model(7, 2, 2), 4);
  EXPECT_TRUE(r.holds);
  double total = 0.0;
  for (double w : r.best_weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Decomposition, RandomInstancesHoldAndLimitsApply) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto cloud = fixtures::blob_cloud(100 + i, 2, 3 + i % 3, 3);
    const auto device = fixtures::blob_cloud(200 + i, 2, 2, 3);
    const auto b = build_directory(cloud, 1 + i % 3, 1);
    const auto r = check_decomposition_bound(device, cloud, b.directory, fixtures::random_model(300 + i, 2, 3),
                                             1 + i % kDecompositionMaxBudget);
    EXPECT_TRUE(r.holds) << "instance " << i << " lhs " << r.lhs << " rhs " << r.rhs;
  }
  const auto cloud = fixtures::blob_cloud(1, 1, kDecompositionMaxCloud + 1, 2);
  const auto b = build_directory(cloud, 1, 1);
  EXPECT_THROW(check_decomposition_bound(cloud, cloud, b.directory, LinearClassifier(1, 2), 2), InvalidArgument);
}

TEST(SimilarityBound, HoldsOnRandomInstances) {
  std::size_t held = 0;
  const std::size_t trials = 40;
  for (std::uint64_t i = 0; i < trials; ++i) {
    const auto cloud = fixtures::blob_cloud(400 + i, 3, 12, 3);
    const auto b = build_directory(cloud, 2, 1);
    const auto model = fixtures::random_model(500 + i, 3, 3);
    const auto device = fixtures::blob_cloud(600 + i, 3, 4, 3);
    const auto w = compute_context_weights(device, b.directory, model, MatchConfig{});
    SamplingConfig cfg;
    cfg.budget_per_class = 4;
    const auto plan = build_plan(w, b.directory, b.assignment, cloud, std::nullopt, cfg);
    const double L = estimate_lipschitz(model, cloud.samples, 500, i);
    if (check_similarity_bound(plan, b.directory, b.assignment, cloud, model, L, 300, i).holds) ++held;
  }
  EXPECT_GE(static_cast<double>(held), 0.95 * trials);
}

TEST(SimilarityBound, ExactCopiesGiveZeroTerms) {
  Dataset cloud{"c", {{{2.0, -1.0}, 0}, {{2.0, -1.0}, 0}, {{2.0, -1.0}, 0}}};
  const auto b = build_directory(cloud, 1, 1);
  const auto plan = build_plan(ContextWeights{1, {{0, 1.0}}, 1}, b.directory, b.assignment, cloud, std::nullopt,
                               SamplingConfig{});
  const auto r = check_similarity_bound(plan, b.directory, b.assignment, cloud, fixtures::random_model(1, 1, 2), 1.0, 50);
  EXPECT_NEAR(r.mean_similarity, 0.0, 1e-12);
  EXPECT_NEAR(r.mean_deviation, 0.0, 1e-12);
  EXPECT_TRUE(r.holds);
}

TEST(SimilarityBound, DeviationScalesWithFeatures) {
  const auto cloud = fixtures::blob_cloud(8, 2, 10, 3);
  const auto b = build_directory(cloud, 2, 1);
  const auto plan = build_plan(ContextWeights{1, {{0, 0.5}, {3, 0.5}}, 1}, b.directory, b.assignment, cloud,
                               std::nullopt, SamplingConfig{});
  auto cloud2 = cloud;
  for (auto& s : cloud2.samples) linalg::scale_in_place(s.feature, 2.0);
  auto dir2 = b.directory;
  for (auto& e : dir2.entries) linalg::scale_in_place(e.medoid, 2.0);
  const auto model = fixtures::random_model(9, 2, 3);
  const auto r1 = check_similarity_bound(plan, b.directory, b.assignment, cloud, model, 1.0, 100, 3);
  const auto r2 = check_similarity_bound(plan, dir2, b.assignment, cloud2, model, 1.0, 100, 3);
  EXPECT_NEAR(r2.mean_deviation, 2.0 * r1.mean_deviation, 1e-9 * r1.mean_deviation);
}

TEST(Diagnostics, HeterogeneityAndConstants) {
  const auto a = fixtures::blob_cloud(10, 2, 5, 3);
  const std::vector<Dataset> same{a, a, a};
  EXPECT_DOUBLE_EQ(heterogeneity(same, 1), 0.0);
  EXPECT_NEAR(heterogeneity(same, 3), 0.0, 1e-24);
  auto shifted = a;
  for (auto& s : shifted.samples) s.feature[0] += 2.0;
  const std::vector<Dataset> two{a, shifted};
  EXPECT_NEAR(heterogeneity(two, 2), 4.0, 1e-12);
  EXPECT_THROW(heterogeneity(two, 3), InvalidArgument);

  const auto model = fixtures::random_model(11, 2, 3);
  EXPECT_GT(estimate_lipschitz(model, a.samples, 200), 0.0);
  EXPECT_GT(estimate_smoothness(model, WeightedSamples{a.samples}, 20), 0.0);
  // Zero head: the gradient difference is (p - e_y)(x1 - x2) with p uniform, so the
  // ratio is exactly ||p - e_y|| = sqrt(1/2) for two classes.
  EXPECT_NEAR(estimate_lipschitz(LinearClassifier(2, 3), a.samples, 200), std::sqrt(0.5), 1e-12);
}

TEST(LossReduction, TermsAreConsistentAndAlphaLowersPastVariance) {
  auto cfg = default_scenario_config(1);
  for (auto& c : cfg.contexts) {
    c.domain_shift = 30.0;
    c.nuisance_scale = 3.0;
  }
  const auto sc = generate_scenario(cfg);
  LossReductionConfig tc;
  tc.seed = 1;
  tc.draws = 400;
  const auto r = check_loss_reduction_terms(sc, 2, tc);
  EXPECT_EQ(r.context, 2u);
  for (double v : {r.new_variance, r.new_variance_alpha0, r.past_variance, r.past_variance_alpha0,
                   r.past_variance_exact, r.past_variance_exact_alpha0, r.heterogeneity, r.smoothness})
    EXPECT_GE(v, 0.0);
  EXPECT_LT(r.past_variance_exact, r.past_variance_exact_alpha0);
  EXPECT_LT(r.past_variance, r.past_variance_alpha0);
  EXPECT_EQ(r.alpha_reduces_past_variance, r.past_variance < r.past_variance_alpha0);
  EXPECT_NEAR(r.loss_reduction, r.loss_before - r.loss_after, 1e-12);
  EXPECT_THROW(check_loss_reduction_terms(sc, 1, tc), InvalidArgument);
}
