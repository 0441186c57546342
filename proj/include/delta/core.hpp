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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "delta/error.hpp"
#include "delta/linalg.hpp"
#include "delta/random.hpp"

namespace delta {

/// Output of the frozen feature extractor, phi(x). Raw inputs are never stored.
using FeatureVector = std::vector<double>;

/// Flattened loss gradient w.r.t. the classifier head: C*d weight entries
/// (row-major, one row per class) followed by C bias entries.
using GradientVector = std::vector<double>;

using Label = std::size_t;

struct LabeledSample {
  FeatureVector feature;
  Label label = 0;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Dataset {
  std::string id;
  std::vector<LabeledSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t feature_dim() const { return samples.empty() ? 0 : samples.front().feature.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// A view over samples with optional non-negative per-sample weights.
/// An empty weight span means uniform weighting.
struct WeightedSamples {
  std::span<const LabeledSample> samples;
  std::span<const double> weights = {};
};

/// Frozen identity extractor: embeddings are ingested as-is.
struct IdentityExtractor {
  FeatureVector operator()(std::span<const double> raw) const { return {raw.begin(), raw.end()}; }
};

/// Seeded Gaussian random projection R^{in} -> R^{out}, scaled by 1/sqrt(out).
/// Only used to synthesize embeddings from raw vectors.
class RandomProjectionExtractor {
 public:
  RandomProjectionExtractor(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed)
      : in_dim_(in_dim), out_dim_(out_dim), matrix_(in_dim * out_dim) {
    detail::require(in_dim > 0 && out_dim > 0, "projection dimensions must be positive");
    Rng rng = make_rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
    for (auto& m : matrix_) m = scale * standard_normal(rng);
  }

  FeatureVector operator()(std::span<const double> raw) const {
    detail::require(raw.size() == in_dim_, "projection input has wrong dimension");
    FeatureVector out(out_dim_, 0.0);
    for (std::size_t r = 0; r < out_dim_; ++r)
      out[r] = linalg::dot(std::span(matrix_).subspan(r * in_dim_, in_dim_), raw);
    return out;
  }

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t out_dim() const noexcept { return out_dim_; }

 private:
  std::size_t in_dim_;
  std::size_t out_dim_;
  std::vector<double> matrix_;
};

/// Linear softmax head psi over frozen features.
class LinearClassifier {
 public:
  LinearClassifier() = default;
  LinearClassifier(std::size_t classes, std::size_t dim)
      : classes_(classes), dim_(dim), params_(classes * dim + classes, 0.0) {
    detail::require(classes >= 1 && dim >= 1, "classifier needs at least one class and one feature");
  }

  static LinearClassifier from_parameters(std::size_t classes, std::size_t dim,
                                          std::vector<double> params) {
    LinearClassifier m(classes, dim);
    detail::require(params.size() == m.parameter_count(), "parameter vector has wrong length");
    detail::require(linalg::all_finite(params), "classifier parameters must be finite");
    m.params_ = std::move(params);
    return m;
  }

  std::size_t classes() const noexcept { return classes_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  double weight(std::size_t cls, std::size_t j) const { return params_[cls * dim_ + j]; }
  double& weight(std::size_t cls, std::size_t j) { return params_[cls * dim_ + j]; }
  double bias(std::size_t cls) const { return params_[classes_ * dim_ + cls]; }
  double& bias(std::size_t cls) { return params_[classes_ * dim_ + cls]; }

  std::vector<double> logits(std::span<const double> feature) const {
    detail::require(feature.size() == dim_, "feature dimension does not match classifier");
    std::vector<double> z(classes_);
    for (std::size_t c = 0; c < classes_; ++c)
      z[c] = linalg::dot(std::span(params_).subspan(c * dim_, dim_), feature) + bias(c);
    return z;
  }

  Label predict(std::span<const double> feature) const {
    const auto z = logits(feature);
    return static_cast<Label>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  friend bool operator==(const LinearClassifier&, const LinearClassifier&) = default;

 private:
  std::size_t classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> params_;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Radius of the parameter neighbourhood used by `similarity`.
  double epsilon_ball = 0.0;
  /// Number of seeded perturbations of the head sampled inside the ball.
  std::size_t perturbation_count = 0;
};

inline std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

namespace detail {

inline void check_sample(const LinearClassifier& model, const LabeledSample& s) {
  require(s.feature.size() == model.dim(), "feature dimension " + std::to_string(s.feature.size()) +
                                               " does not match classifier dimension " +
                                               std::to_string(model.dim()));
  require(s.label < model.classes(), "label " + std::to_string(s.label) + " out of range");
}

/// g += scale * grad(model, sample), without allocating the full gradient.
inline void accumulate_gradient(const LinearClassifier& model, const LabeledSample& s, double scale,
                                std::span<double> g) {
  auto p = softmax(model.logits(s.feature));
  p[s.label] -= 1.0;
  const std::size_t d = model.dim();
  const std::size_t bias_off = model.classes() * d;
  for (std::size_t c = 0; c < model.classes(); ++c) {
    const double r = scale * p[c];
    if (r == 0.0) continue;
    linalg::axpy(r, s.feature, g.subspan(c * d, d));
    g[bias_off + c] += r;
  }
}

}  // namespace detail

/// Cross-entropy loss -log softmax(W x + b)_y of a single sample.
inline double sample_loss(const LinearClassifier& model, const LabeledSample& s) {
  detail::check_sample(model, s);
  const auto z = model.logits(s.feature);
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - zmax);
  return (zmax + std::log(total)) - z[s.label];
}

/// Weighted mean cross-entropy over a sample set.
inline double dataset_loss(const LinearClassifier& model, WeightedSamples data) {
  detail::require(!data.samples.empty(), "loss of an empty dataset");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double u = data.weights.empty() ? 1.0 : data.weights[i];
    num += u * sample_loss(model, data.samples[i]);
    den += u;
  }
  return num / den;
}

/// Closed-form cross-entropy gradient of the head:
/// (softmax(z) - onehot(y)) outer [x, 1].
inline GradientVector per_sample_gradient(const LinearClassifier& model, const LabeledSample& s) {
  detail::check_sample(model, s);
  GradientVector g(model.parameter_count(), 0.0);
  detail::accumulate_gradient(model, s, 1.0, g);
  return g;
}

/// Mean per-sample gradient; with weights, sum(u_i g_i) / sum(u_i).
inline GradientVector dataset_gradient(const LinearClassifier& model, WeightedSamples data) {
  detail::require(!data.samples.empty(), "gradient of an empty dataset");
  const bool weighted = !data.weights.empty();
  if (weighted) {
    detail::require(data.weights.size() == data.samples.size(), "weights length does not match samples");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double u = weighted ? data.weights[i] : 1.0;
    detail::require(u >= 0.0 && std::isfinite(u), "sample weights must be finite and non-negative");
    total += u;
  }
  detail::require(total > 0.0, "sample weights sum to zero");
  GradientVector g(model.parameter_count(), 0.0);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double u = weighted ? data.weights[i] : 1.0;
    detail::check_sample(model, data.samples[i]);
    if (u == 0.0) continue;
    detail::accumulate_gradient(model, data.samples[i], u / total, g);
  }
  return g;
}

inline GradientVector dataset_gradient(const LinearClassifier& model, const Dataset& data,
                                       std::span<const double> weights = {}) {
  return dataset_gradient(model, WeightedSamples{data.samples, weights});
}

/// Perturbed heads theta' = theta + r * u with u uniform on the unit sphere and
/// r = eps * U^(1/P). The k-th perturbation depends only on (seed, k), so the set
/// for K is a prefix of the set for K+1.
inline std::vector<LinearClassifier> perturbed_models(const LinearClassifier& model, const TrainConfig& cfg) {
  std::vector<LinearClassifier> out;
  out.push_back(model);
  if (cfg.perturbation_count == 0 || cfg.epsilon_ball <= 0.0) return out;
  const std::size_t n = model.parameter_count();
  for (std::size_t k = 0; k < cfg.perturbation_count; ++k) {
    Rng rng = make_rng(derive_seed(cfg.seed, k));
    const auto dir = unit_direction(rng, n);
    const double r = cfg.epsilon_ball * std::pow(uniform01(rng), 1.0 / static_cast<double>(n));
    LinearClassifier m = model;
    linalg::axpy(r, dir, m.parameters());
    out.push_back(std::move(m));
  }
  return out;
}

/// Gradient-matching similarity: minus the largest gradient-difference norm over
/// the head and its sampled epsilon-ball perturbations. Always <= 0.
inline double similarity(WeightedSamples d1, WeightedSamples d2, const LinearClassifier& model,
                         const TrainConfig& cfg) {
  detail::require(!d1.samples.empty() && !d2.samples.empty(), "similarity of an empty dataset");
  double worst = 0.0;
  for (const auto& m : perturbed_models(model, cfg)) {
    const auto g1 = dataset_gradient(m, d1);
    const auto g2 = dataset_gradient(m, d2);
    worst = std::max(worst, linalg::distance(g1, g2));
  }
  return -worst;
}

inline double similarity(const Dataset& d1, const Dataset& d2, const LinearClassifier& model,
                         const TrainConfig& cfg) {
  return similarity(WeightedSamples{d1.samples}, WeightedSamples{d2.samples}, model, cfg);
}

/// Mini-batch gradient descent on the (weighted) cross-entropy of the head.
/// Each step uses the weighted mean gradient of its batch. Deterministic given cfg.seed.
inline LinearClassifier train(LinearClassifier model, WeightedSamples data, const TrainConfig& cfg) {
  detail::require(!data.samples.empty(), "training on an empty dataset");
  detail::require(cfg.learning_rate > 0.0, "learning rate must be positive");
  detail::require(cfg.batch_size >= 1, "batch size must be at least 1");
  if (!data.weights.empty())
    detail::require(data.weights.size() == data.samples.size(), "weights length does not match samples");
  for (const auto& s : data.samples) detail::check_sample(model, s);

  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(cfg.seed);
  GradientVector g(model.parameter_count());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      double total = 0.0;
      for (std::size_t i = start; i < stop; ++i)
        total += data.weights.empty() ? 1.0 : data.weights[order[i]];
      if (total <= 0.0) continue;
      std::fill(g.begin(), g.end(), 0.0);
      double loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = data.samples[order[i]];
        const double u = (data.weights.empty() ? 1.0 : data.weights[order[i]]) / total;
        if (u == 0.0) continue;
        loss += u * sample_loss(model, s);
        detail::accumulate_gradient(model, s, u, g);
      }
      if (!std::isfinite(loss) || !linalg::all_finite(g)) throw DivergenceError(epoch, step);
      linalg::axpy(-cfg.learning_rate, g, model.parameters());
    }
  }
  if (!linalg::all_finite(model.parameters())) throw DivergenceError(cfg.epochs, step);
  return model;
}

inline LinearClassifier train(LinearClassifier model, const Dataset& data, const TrainConfig& cfg,
                              std::span<const double> weights = {}) {
  return train(std::move(model), WeightedSamples{data.samples, weights}, cfg);
}

/// Top-1 accuracy in [0, 1].
inline double evaluate(const LinearClassifier& model, std::span<const LabeledSample> data) {
  detail::require(!data.empty(), "evaluation on an empty dataset");
  std::size_t correct = 0;
  for (const auto& s : data) {
    detail::check_sample(model, s);
    if (model.predict(s.feature) == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline double evaluate(const LinearClassifier& model, const Dataset& data) {
  return evaluate(model, std::span<const LabeledSample>(data.samples));
}

/// Mean feature of a (weighted) sample set.
inline FeatureVector mean_feature(WeightedSamples data) {
  detail::require(!data.samples.empty(), "mean of an empty dataset");
  FeatureVector m(data.samples.front().feature.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const double u = data.weights.empty() ? 1.0 : data.weights[i];
    linalg::axpy(u, data.samples[i].feature, m);
    total += u;
  }
  detail::require(total > 0.0, "weights sum to zero");
  linalg::scale_in_place(m, 1.0 / total);
  return m;
}

}  // namespace delta
