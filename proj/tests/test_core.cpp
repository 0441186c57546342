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

#include "delta/core.hpp"
#include "support.hpp"

using namespace delta;

TEST(Gradient, HandComputedTwoClassExample) {
  // Zero head: softmax is uniform, so dL/dW_c = (p_c - [c == y]) x and dL/db_c = p_c - [c == y].
  LinearClassifier m(2, 2);
  const LabeledSample s{{1.0, 2.0}, 1};
  const auto g = per_sample_gradient(m, s);
  const std::vector<double> expected{0.5, 1.0, -0.5, -1.0, 0.5, -0.5};
  ASSERT_EQ(g.size(), expected.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], expected[i], 1e-12);
  EXPECT_NEAR(sample_loss(m, s), std::log(2.0), 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng = make_rng(i);
    const std::size_t classes = 2 + i % 4, dim = 1 + i % 6;
    const auto model = fixtures::random_model(1000 + i, classes, dim, 1.0);
    std::vector<LabeledSample> samples;
    std::vector<double> weights;
    for (std::size_t k = 0; k < 4; ++k) {
      samples.push_back({normal_vector(rng, dim), static_cast<Label>(rng() % classes)});
      weights.push_back(0.2 + uniform01(rng));
    }
    const auto g = dataset_gradient(model, WeightedSamples{samples, weights});
    const auto fd = fixtures::finite_difference_gradient(model, samples, weights);
    EXPECT_LT(fixtures::relative_error(g, fd), 1e-5) << "instance " << i;
    EXPECT_NEAR(dataset_loss(model, WeightedSamples{samples, weights}),
                fixtures::reference_loss({model.parameters().begin(), model.parameters().end()}, classes, dim, samples,
                                        weights),
                1e-12);
  }
}

TEST(Gradient, SaturatedCorrectLogitGivesZeroGradient) {
  LinearClassifier m(3, 1);
  m.bias(2) = 1000.0;
  const auto g = per_sample_gradient(m, {{1.0}, 2});
  for (double v : g) EXPECT_NEAR(v, 0.0, 1e-12);
  EXPECT_TRUE(linalg::all_finite(g));
}

TEST(Gradient, DatasetGradientIsWeightedMean) {
  const auto m = fixtures::random_model(3, 3, 4);
  const auto cloud = fixtures::blob_cloud(4, 3, 5, 4);
  std::vector<double> w(cloud.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 + static_cast<double>(i % 3);
  const auto g = dataset_gradient(m, cloud, w);
  GradientVector ref(m.parameter_count(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    linalg::axpy(w[i], per_sample_gradient(m, cloud.samples[i]), ref);
    total += w[i];
  }
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], ref[i] / total, 1e-12);

  // Scaling all weights leaves the gradient unchanged; zero-weight samples are ignored.
  std::vector<double> w3 = w;
  for (auto& v : w3) v *= 3.0;
  const auto g3 = dataset_gradient(m, cloud, w3);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], g3[i], 1e-12);
}

TEST(Gradient, RejectsBadInput) {
  LinearClassifier m(2, 3);
  EXPECT_THROW(per_sample_gradient(m, {{1.0, 2.0}, 0}), InvalidArgument);
  EXPECT_THROW(per_sample_gradient(m, {{1.0, 2.0, 3.0}, 5}), InvalidArgument);
  Dataset d{"d", {{{1.0, 2.0, 3.0}, 0}}};
  EXPECT_THROW(dataset_gradient(m, d, std::vector<double>{1.0, 2.0}), InvalidArgument);
  EXPECT_THROW(LinearClassifier::from_parameters(2, 3, std::vector<double>(5, 0.0)), InvalidArgument);
}

TEST(Similarity, IdenticalDatasetsScoreZeroAndSimilarityIsNonPositive) {
  const auto m = fixtures::random_model(7, 3, 4);
  const auto a = fixtures::blob_cloud(8, 3, 4, 4);
  const auto b = fixtures::blob_cloud(9, 3, 4, 4);
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(similarity(a, a, m, cfg), 0.0);
  EXPECT_LE(similarity(a, b, m, cfg), 0.0);
  EXPECT_DOUBLE_EQ(similarity(a, b, m, cfg), similarity(b, a, m, cfg));
  EXPECT_NEAR(similarity(a, b, m, cfg), -linalg::distance(dataset_gradient(m, a), dataset_gradient(m, b)), 1e-12);
}

TEST(Similarity, MorePerturbationsNeverIncreaseSimilarity) {
  const auto m = fixtures::random_model(10, 3, 4);
  const auto a = fixtures::blob_cloud(11, 3, 4, 4);
  const auto b = fixtures::blob_cloud(12, 3, 4, 4);
  TrainConfig cfg;
  cfg.epsilon_ball = 0.5;
  cfg.seed = 5;
  double prev = 0.0;
  for (std::size_t k = 0; k <= 20; ++k) {
    cfg.perturbation_count = k;
    const double s = similarity(a, b, m, cfg);
    if (k > 0) {
      EXPECT_LE(s, prev + 1e-15);
    }
    prev = s;
  }
}

TEST(Similarity, ZeroRadiusEqualsPlainGradientDistance) {
  const auto m = fixtures::random_model(13, 2, 3);
  const auto a = fixtures::blob_cloud(14, 2, 3, 3);
  const auto b = fixtures::blob_cloud(15, 2, 3, 3);
  TrainConfig plain, ball;
  ball.perturbation_count = 10;
  ball.epsilon_ball = 0.0;
  EXPECT_DOUBLE_EQ(similarity(a, b, m, plain), similarity(a, b, m, ball));
}

TEST(Similarity, PerturbationsAreNestedAndInsideTheBall) {
  const auto m = fixtures::random_model(16, 2, 3);
  TrainConfig cfg;
  cfg.epsilon_ball = 0.3;
  cfg.perturbation_count = 5;
  cfg.seed = 2;
  const auto five = perturbed_models(m, cfg);
  cfg.perturbation_count = 8;
  const auto eight = perturbed_models(m, cfg);
  ASSERT_EQ(five.size(), 6u);
  for (std::size_t k = 0; k < five.size(); ++k) EXPECT_EQ(five[k], eight[k]);
  for (const auto& p : eight) EXPECT_LE(linalg::distance(p.parameters(), m.parameters()), 0.3 + 1e-12);
}

TEST(Train, ZeroEpochsIsIdentity) {
  const auto m = fixtures::random_model(17, 3, 4);
  const auto d = fixtures::blob_cloud(18, 3, 5, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_EQ(train(m, d, cfg), m);
}

TEST(Train, SeparableDataReachesFullAccuracy) {
  const auto d = fixtures::blob_cloud(19, 3, 30, 4, 10.0, 0.3);
  TrainConfig cfg{0.1, 50, 8, 1, 0.0, 0};
  const auto m = train(LinearClassifier(3, 4), d, cfg);
  EXPECT_DOUBLE_EQ(evaluate(m, d), 1.0);
}

TEST(Train, DeterministicGivenSeed) {
  const auto d = fixtures::blob_cloud(20, 4, 10, 5);
  TrainConfig cfg{0.05, 5, 4, 42, 0.0, 0};
  EXPECT_EQ(train(LinearClassifier(4, 5), d, cfg), train(LinearClassifier(4, 5), d, cfg));
  TrainConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(train(LinearClassifier(4, 5), d, cfg), train(LinearClassifier(4, 5), d, other));
}

TEST(Train, DivergenceRaises) {
  const auto d = fixtures::blob_cloud(21, 2, 10, 3, 1e150, 1e150);
  TrainConfig cfg{1e150, 3, 4, 0, 0.0, 0};
  EXPECT_THROW(train(LinearClassifier(2, 3), d, cfg), DivergenceError);
}

TEST(Train, RejectsBadConfig) {
  const auto d = fixtures::blob_cloud(22, 2, 3, 3);
  EXPECT_THROW(train(LinearClassifier(2, 3), d, TrainConfig{0.0, 1, 4, 0, 0.0, 0}), InvalidArgument);
  EXPECT_THROW(train(LinearClassifier(2, 3), d, TrainConfig{0.1, 1, 0, 0, 0.0, 0}), InvalidArgument);
  EXPECT_THROW(train(LinearClassifier(2, 3), Dataset{}, TrainConfig{}), InvalidArgument);
}

TEST(Evaluate, RandomHeadIsNearChanceOnBalancedBinaryData) {
  double total = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto d = fixtures::blob_cloud(100 + i, 2, 250, 8, 0.0, 1.0);
    total += evaluate(fixtures::random_model(200 + i, 2, 8), d);
  }
  EXPECT_NEAR(total / 40.0, 0.5, 0.05);
}

TEST(Evaluate, EmptyDatasetRaises) {
  EXPECT_THROW(evaluate(LinearClassifier(2, 2), Dataset{}), InvalidArgument);
}

TEST(Softmax, StableForLargeLogits) {
  const auto p = softmax(std::vector<double>{1000.0, 1000.0, -1000.0});
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
  EXPECT_NEAR(p[2], 0.0, 1e-12);
}

TEST(Extractor, RandomProjectionIsSeededAndLinear) {
  RandomProjectionExtractor a(6, 3, 9), b(6, 3, 9);
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(a(x), b(x));
  std::vector<double> x2 = x;
  for (auto& v : x2) v *= 2.0;
  const auto y = a(x), y2 = a(x2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(y2[i], 2.0 * y[i], 1e-12);
  EXPECT_THROW(a(std::vector<double>{1.0}), InvalidArgument);
}

TEST(MeanFeature, WeightedMean) {
  std::vector<LabeledSample> s{{{0.0, 0.0}, 0}, {{4.0, 2.0}, 1}};
  std::vector<double> w{3.0, 1.0};
  const auto m = mean_feature(WeightedSamples{s, w});
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 0.5);
}
