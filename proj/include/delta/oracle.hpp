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
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "delta/cloud.hpp"
#include "delta/core.hpp"
#include "delta/device.hpp"
#include "delta/directory.hpp"
#include "delta/scenario.hpp"

// Brute-force oracles and Monte Carlo checks of the sampling guarantees. All of
// them are meant for small instances.
namespace delta {

inline constexpr std::size_t kOracleMaxBudget = 8;
inline constexpr std::size_t kOracleMaxClusterSize = 6;
inline constexpr std::size_t kOracleMaxClusters = 4;
inline constexpr std::size_t kDecompositionMaxCloud = 10;
inline constexpr std::size_t kDecompositionMaxBudget = 6;
inline constexpr std::size_t kDecompositionMaxEntries = 6;
inline constexpr double kSimplexStep = 0.05;

namespace detail {

/// Calls f on every vector of `parts` non-negative integers summing to `total`.
inline void for_each_composition(std::size_t total, std::size_t parts,
                                 const std::function<void(const std::vector<std::size_t>&)>& f) {
  std::vector<std::size_t> c(parts, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i + 1 == parts) {
      c[i] = left;
      f(c);
      return;
    }
    for (std::size_t k = 0; k <= left; ++k) {
      c[i] = k;
      rec(i + 1, left - k);
    }
  };
  if (parts == 0) return;
  rec(0, total);
}

inline std::size_t grid_steps(double step) {
  const auto n = static_cast<std::size_t>(std::llround(1.0 / step));
  require(n >= 1 && std::abs(static_cast<double>(n) * step - 1.0) < 1e-9, "simplex step must divide 1");
  return n;
}

/// Medoid-centred deviations v_x = phi(x) - phi(medoid) of one cluster.
struct ClusterMoments {
  ClusterId id = 0;
  double weight = 0.0;
  FeatureVector medoid;
  std::vector<FeatureVector> deviations;
  FeatureVector mean_deviation;
};

inline ClusterMoments cluster_moments(ClusterId id, double weight, const Directory& dir,
                                      const ClusterAssignment& assignment, const Dataset& cloud) {
  ClusterMoments m;
  m.id = id;
  m.weight = weight;
  m.medoid = dir.at(id).medoid;
  m.mean_deviation.assign(m.medoid.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (assignment.cluster_of[i] != id) continue;
    m.deviations.push_back(linalg::subtract(cloud.samples[i].feature, m.medoid));
    linalg::axpy(1.0, m.deviations.back(), m.mean_deviation);
  }
  require(!m.deviations.empty(), "cluster " + std::to_string(id) + " has no cloud members");
  linalg::scale_in_place(m.mean_deviation, 1.0 / static_cast<double>(m.deviations.size()));
  return m;
}

/// sum_x ||v_x||^2 / (N^2 p_x): second moment of one importance-weighted,
/// medoid-centred draw (per unit weight). Members at the medoid cost nothing.
inline double draw_second_moment(const ClusterMoments& m, std::span<const double> p) {
  const double n = static_cast<double>(m.deviations.size());
  double second = 0.0;
  for (std::size_t i = 0; i < m.deviations.size(); ++i) {
    const double v2 = linalg::squared_norm(m.deviations[i]);
    if (v2 == 0.0) continue;
    if (!(p[i] > 0.0)) return std::numeric_limits<double>::infinity();
    second += v2 / (n * n * p[i]);
  }
  return second;
}

}  // namespace detail

struct OracleResult {
  double best_value = 0.0;
  double analytical_value = 0.0;
  double gap = 0.0;  ///< analytical - best
  std::map<ClusterId, std::size_t> best_sizes;
  std::map<ClusterId, std::size_t> analytical_sizes;

  double relative_gap() const { return best_value > 0.0 ? gap / best_value : (gap > 0.0 ? gap : 0.0); }
};

/// Expected squared deviation of the sampled feature mean from the weighted
/// directory mean, sum_c (w_c^2 / |S_c|) * sum_x ||v_x||^2 / (N_c^2 p_x), for
/// sampling with replacement. A weighted cluster allotted no samples makes the
/// value infinite.
inline double plan_objective(const std::vector<detail::ClusterMoments>& clusters,
                             const std::map<ClusterId, std::size_t>& sizes,
                             const std::map<ClusterId, std::vector<double>>& probs) {
  double total = 0.0;
  for (const auto& m : clusters) {
    if (m.weight == 0.0) continue;
    const std::size_t s = sizes.at(m.id);
    if (s == 0) return std::numeric_limits<double>::infinity();
    total += m.weight * m.weight * detail::draw_second_moment(m, probs.at(m.id)) / static_cast<double>(s);
  }
  return total;
}

/// Enumerates every allocation of `budget` over the weighted clusters and, per
/// cluster, every probability vector on the simplex grid; compares the best
/// value against the plan built by allocate_sizes and intra_cluster_probs.
inline OracleResult oracle_optimal_plan(const ContextWeights& weights, const Directory& dir,
                                        const ClusterAssignment& assignment, const Dataset& cloud, std::size_t budget,
                                        double step = kSimplexStep) {
  if (budget == 0 || budget > kOracleMaxBudget)
    throw InvalidArgument("oracle budget must be in 1.." + std::to_string(kOracleMaxBudget));
  const auto w = weights.normalized();
  if (w.weights.size() > kOracleMaxClusters)
    throw InvalidArgument("oracle supports at most " + std::to_string(kOracleMaxClusters) + " weighted clusters");
  std::vector<detail::ClusterMoments> clusters;
  for (const auto& [id, wc] : w.weights) {
    clusters.push_back(detail::cluster_moments(id, wc, dir, assignment, cloud));
    if (clusters.back().deviations.size() > kOracleMaxClusterSize)
      throw InvalidArgument("oracle supports clusters of at most " + std::to_string(kOracleMaxClusterSize) +
                            " members");
  }

  // The objective separates: each cluster's grid minimum is independent of its size.
  const std::size_t steps = detail::grid_steps(step);
  std::map<ClusterId, std::vector<double>> best_probs;
  for (const auto& m : clusters) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> p(m.deviations.size());
    detail::for_each_composition(steps, m.deviations.size(), [&](const std::vector<std::size_t>& c) {
      for (std::size_t i = 0; i < c.size(); ++i) p[i] = static_cast<double>(c[i]) * step;
      const double v = detail::draw_second_moment(m, p);
      if (v < best) {
        best = v;
        best_probs[m.id] = p;
      }
    });
  }

  OracleResult r;
  r.best_value = std::numeric_limits<double>::infinity();
  detail::for_each_composition(budget, clusters.size(), [&](const std::vector<std::size_t>& alloc) {
    std::map<ClusterId, std::size_t> sizes;
    for (std::size_t i = 0; i < clusters.size(); ++i) sizes[clusters[i].id] = alloc[i];
    const double v = plan_objective(clusters, sizes, best_probs);
    if (v < r.best_value) {
      r.best_value = v;
      r.best_sizes = sizes;
    }
  });

  r.analytical_sizes = allocate_sizes(w, dir, budget);
  std::map<ClusterId, std::vector<double>> probs;
  for (const auto& m : clusters) {
    std::vector<FeatureVector> feats;
    for (const auto& v : m.deviations) {
      feats.push_back(v);
      linalg::axpy(1.0, m.medoid, feats.back());
    }
    probs[m.id] = intra_cluster_probs(feats, m.medoid);
  }
  r.analytical_value = plan_objective(clusters, r.analytical_sizes, probs);
  r.gap = r.analytical_value - r.best_value;
  return r;
}

struct DecompositionResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double directory_similarity = 0.0;  ///< max_w Sim(device, w D^dir)
  double sample_similarity = 0.0;     ///< max_S Sim(S, w* D^dir)
  std::vector<double> best_weights;   ///< w* on the simplex grid
  bool holds = false;
};

/// Exhaustive check of Sim(D_de, S) >= Sim(D_de, w D^dir) + Sim(S, w D^dir) in its
/// maximized form, at the model itself (no parameter perturbation).
inline DecompositionResult check_decomposition_bound(const Dataset& device, const Dataset& cloud, const Directory& dir,
                                                     const LinearClassifier& model, std::size_t budget,
                                                     double step = kSimplexStep) {
  if (cloud.size() > kDecompositionMaxCloud)
    throw InvalidArgument("decomposition check supports at most " + std::to_string(kDecompositionMaxCloud) +
                          " cloud samples");
  if (budget == 0 || budget > kDecompositionMaxBudget)
    throw InvalidArgument("decomposition budget must be in 1.." + std::to_string(kDecompositionMaxBudget));
  if (dir.size() == 0 || dir.size() > kDecompositionMaxEntries)
    throw InvalidArgument("decomposition check supports 1.." + std::to_string(kDecompositionMaxEntries) +
                          " directory entries");
  detail::require(!device.empty() && !cloud.empty(), "decomposition check needs device and cloud samples");

  const auto g_dev = dataset_gradient(model, device);
  std::vector<GradientVector> g_cloud, g_dir;
  for (const auto& s : cloud.samples) g_cloud.push_back(per_sample_gradient(model, s));
  for (const auto& e : dir.entries) g_dir.push_back(per_sample_gradient(model, LabeledSample{e.medoid, e.label}));

  // Mean gradients of every non-empty subset of size <= budget.
  std::vector<GradientVector> g_subsets;
  const std::size_t n = cloud.size();
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    const auto k = static_cast<std::size_t>(std::popcount(mask));
    if (k > budget) continue;
    GradientVector g(model.parameter_count(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) linalg::axpy(1.0 / static_cast<double>(k), g_cloud[i], g);
    g_subsets.push_back(std::move(g));
  }

  DecompositionResult r;
  r.lhs = -std::numeric_limits<double>::infinity();
  for (const auto& g : g_subsets) r.lhs = std::max(r.lhs, -linalg::distance(g_dev, g));

  r.directory_similarity = -std::numeric_limits<double>::infinity();
  const std::size_t steps = detail::grid_steps(step);
  detail::for_each_composition(steps, dir.size(), [&](const std::vector<std::size_t>& c) {
    GradientVector g(model.parameter_count(), 0.0);
    for (std::size_t j = 0; j < c.size(); ++j)
      if (c[j] > 0) linalg::axpy(static_cast<double>(c[j]) * step, g_dir[j], g);
    const double sim = -linalg::distance(g_dev, g);
    if (sim > r.directory_similarity) {
      r.directory_similarity = sim;
      r.best_weights.assign(c.size(), 0.0);
      for (std::size_t j = 0; j < c.size(); ++j) r.best_weights[j] = static_cast<double>(c[j]) * step;
    }
  });

  GradientVector g_star(model.parameter_count(), 0.0);
  for (std::size_t j = 0; j < dir.size(); ++j) linalg::axpy(r.best_weights[j], g_dir[j], g_star);
  r.sample_similarity = -std::numeric_limits<double>::infinity();
  for (const auto& g : g_subsets) r.sample_similarity = std::max(r.sample_similarity, -linalg::distance(g, g_star));

  r.rhs = r.directory_similarity + r.sample_similarity;
  r.holds = r.lhs >= r.rhs - 1e-6;
  return r;
}

/// Largest observed ||grad(x1, y) - grad(x2, y)|| / ||phi(x1) - phi(x2)|| over
/// random same-label pairs, half of them a sample and a perturbed copy of it.
inline double estimate_lipschitz(const LinearClassifier& model, std::span<const LabeledSample> samples,
                                 std::size_t pairs = 1000, std::uint64_t seed = 0, double probe_scale = 0.5) {
  detail::require(!samples.empty(), "Lipschitz estimate needs samples");
  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) by_label[samples[i].label].push_back(i);
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  double best = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto& a = samples[pick(rng)];
    LabeledSample b;
    const auto& same = by_label.at(a.label);
    if (k % 2 == 0 && same.size() > 1) {
      b = samples[same[std::uniform_int_distribution<std::size_t>(0, same.size() - 1)(rng)]];
    } else {
      b = a;
      linalg::axpy(1.0, normal_vector(rng, a.feature.size(), probe_scale), b.feature);
    }
    const double dx = linalg::distance(a.feature, b.feature);
    if (dx <= 0.0) continue;
    best = std::max(best, linalg::distance(per_sample_gradient(model, a), per_sample_gradient(model, b)) / dx);
  }
  return best;
}

/// Largest observed ||grad L(theta + delta) - grad L(theta)|| / ||delta|| over
/// random parameter probes of norm `radius`.
inline double estimate_smoothness(const LinearClassifier& model, WeightedSamples data, std::size_t probes = 100,
                                  std::uint64_t seed = 0, double radius = 0.1) {
  const auto g0 = dataset_gradient(model, data);
  Rng rng = make_rng(seed);
  double best = 0.0;
  for (std::size_t k = 0; k < probes; ++k) {
    auto dir = unit_direction(rng, model.parameter_count());
    std::vector<double> params(model.parameters().begin(), model.parameters().end());
    linalg::axpy(radius, dir, params);
    const auto probe = LinearClassifier::from_parameters(model.classes(), model.dim(), params);
    best = std::max(best, linalg::distance(dataset_gradient(probe, data), g0) / radius);
  }
  return best;
}

struct DiagnosticsEstimate {
  double lipschitz = 0.0;
  double smoothness = 0.0;
  std::vector<double> heterogeneity;  ///< per context t; 0 for the first context
};

/// ||mean phi(D^t) - mean phi(D^{1..t-1})||^2 over the device datasets; 0 for t = 1.
inline double heterogeneity(std::span<const Dataset> device, std::size_t t) {
  detail::require(t >= 1 && t <= device.size(), "context index out of range");
  if (t == 1) return 0.0;
  std::vector<LabeledSample> past;
  for (std::size_t i = 0; i + 1 < t; ++i) past.insert(past.end(), device[i].samples.begin(), device[i].samples.end());
  return linalg::squared_distance(mean_feature(WeightedSamples{device[t - 1].samples}), mean_feature(WeightedSamples{past}));
}

inline DiagnosticsEstimate estimate_diagnostics(const Scenario& sc, const LinearClassifier& model,
                                                std::uint64_t seed = 0, std::size_t pairs = 1000) {
  DiagnosticsEstimate d;
  d.lipschitz = estimate_lipschitz(model, sc.cloud.samples, pairs, derive_seed(seed, 1));
  std::vector<LabeledSample> all;
  for (const auto& ds : sc.device) all.insert(all.end(), ds.samples.begin(), ds.samples.end());
  d.smoothness = estimate_smoothness(model, WeightedSamples{all}, 100, derive_seed(seed, 2));
  for (std::size_t t = 1; t <= sc.device.size(); ++t) d.heterogeneity.push_back(heterogeneity(sc.device, t));
  return d;
}

struct SimilarityBoundResult {
  double mean_similarity = 0.0;  ///< E[Sim(S, w D^dir)]
  double mean_deviation = 0.0;   ///< E||sum u phi(S) - sum w_c phi(medoid_c)||
  double lipschitz = 0.0;
  double standard_error = 0.0;   ///< of mean(similarity + L * deviation)
  bool holds = false;
};

/// Monte Carlo check of E[Sim(S, w D^dir)] >= -L * E||sum u phi(S) - sum w phi(medoid)||
/// with a 3 standard error slack. S is weighted by its importance weights.
inline SimilarityBoundResult check_similarity_bound(const SamplingPlan& plan, const Directory& dir,
                                           const ClusterAssignment& assignment, const Dataset& cloud,
                                           const LinearClassifier& model, double lipschitz, std::size_t draws = 1000,
                                           std::uint64_t seed = 0) {
  detail::require(draws >= 2, "similarity bound check needs at least two draws");
  detail::require(lipschitz >= 0.0, "Lipschitz constant must be non-negative");
  GradientVector g_dir(model.parameter_count(), 0.0);
  FeatureVector f_dir(dir.feature_dim, 0.0);
  for (const auto& cp : plan.clusters) {
    const auto& e = dir.at(cp.cluster_id);
    detail::accumulate_gradient(model, LabeledSample{e.medoid, e.label}, cp.weight, g_dir);
    linalg::axpy(cp.weight, e.medoid, f_dir);
  }
  SimilarityBoundResult r;
  r.lipschitz = lipschitz;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const auto batch = draw_samples(plan, cloud, assignment, derive_seed(seed, k));
    GradientVector g(model.parameter_count(), 0.0);
    FeatureVector f(dir.feature_dim, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      detail::accumulate_gradient(model, batch.samples[i], batch.importance_weights[i], g);
      linalg::axpy(batch.importance_weights[i], batch.samples[i].feature, f);
    }
    const double sim = -linalg::distance(g, g_dir);
    const double dev = linalg::distance(f, f_dir);
    r.mean_similarity += sim;
    r.mean_deviation += dev;
    const double slack = sim + lipschitz * dev;
    sum += slack;
    sum_sq += slack * slack;
  }
  const double n = static_cast<double>(draws);
  r.mean_similarity /= n;
  r.mean_deviation /= n;
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  r.standard_error = std::sqrt(var / n);
  r.holds = mean >= -3.0 * r.standard_error - 1e-12;
  return r;
}

struct LossReductionConfig {
  std::size_t draws = 1000;
  double alpha = 1.0;
  SamplingConfig sampling{};
  MatchConfig match{};
  std::size_t clusters_per_label = kDefaultClustersPerLabel;
  TrainConfig train{0.05, 30, 16, 0, 0.0, 0};
  /// Step size of the single update whose loss reduction is measured.
  double step_size = 0.05;
  std::uint64_t seed = 0;
};

struct LossReductionReport {
  std::size_t context = 0;
  double new_variance_alpha0 = 0.0;
  double new_variance = 0.0;
  double past_variance_alpha0 = 0.0;
  double past_variance = 0.0;
  /// Closed-form values of the past-context term. The alpha = 0 plan gives members
  /// at the medoid only floor probability, which Monte Carlo rarely sees.
  double past_variance_exact_alpha0 = 0.0;
  double past_variance_exact = 0.0;
  double heterogeneity = 0.0;
  double smoothness = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  double loss_reduction = 0.0;
  bool alpha_reduces_past_variance = false;
};

namespace detail {

/// Monte Carlo trace variances of sum_c sum_{i in S_c} u_i (phi_i - a_c), with a_c
/// the cluster medoid (new-context term) and the past mean (past-context term).
inline std::pair<double, double> plan_variances(const SamplingPlan& plan, const Directory& dir,
                                                const ClusterAssignment& assignment, const Dataset& cloud,
                                                const FeatureVector& past_mean, std::size_t draws,
                                                std::uint64_t seed) {
  const std::size_t dim = dir.feature_dim;
  FeatureVector sum_new(dim, 0.0), sum_past(dim, 0.0);
  double sq_new = 0.0, sq_past = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    const auto batch = draw_samples(plan, cloud, assignment, derive_seed(seed, k));
    FeatureVector e_new(dim, 0.0), e_past(dim, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double u = batch.importance_weights[i];
      const auto& f = batch.samples[i].feature;
      linalg::axpy(u, linalg::subtract(f, dir.at(batch.provenance[i].cluster_id).medoid), e_new);
      linalg::axpy(u, linalg::subtract(f, past_mean), e_past);
    }
    linalg::axpy(1.0, e_new, sum_new);
    linalg::axpy(1.0, e_past, sum_past);
    sq_new += linalg::squared_norm(e_new);
    sq_past += linalg::squared_norm(e_past);
  }
  const double n = static_cast<double>(draws);
  const double v_new = (sq_new - linalg::squared_norm(sum_new) / n) / (n - 1.0);
  const double v_past = (sq_past - linalg::squared_norm(sum_past) / n) / (n - 1.0);
  return {std::max(0.0, v_new), std::max(0.0, v_past)};
}

/// sum_c (w_c^2 / |S_c|) * (sum_x ||phi_x - a||^2 / (N_c^2 p_x) - ||mu_c - a||^2)
inline double plan_variance_exact(const SamplingPlan& plan, const Dataset& cloud, const FeatureVector& anchor) {
  double v = 0.0;
  for (const auto& cp : plan.clusters) {
    if (cp.size == 0) continue;
    const double n = static_cast<double>(cp.members.size());
    double second = 0.0;
    FeatureVector mu(anchor.size(), 0.0);
    for (std::size_t j = 0; j < cp.members.size(); ++j) {
      const auto& f = cloud.samples[cp.members[j]].feature;
      second += linalg::squared_distance(f, anchor) / (n * n * cp.probs[j]);
      linalg::axpy(1.0 / n, f, mu);
    }
    v += cp.weight * cp.weight / static_cast<double>(cp.size) * (second - linalg::squared_distance(mu, anchor));
  }
  return std::max(0.0, v);
}

}  // namespace detail

/// Evaluates the right-hand-side terms of the loss-reduction bound at context t
/// for the alpha = 0 and alpha = cfg.alpha plans, and the measured loss change of
/// one gradient step on device data t plus the enriched batch.
inline LossReductionReport check_loss_reduction_terms(const Scenario& sc, std::size_t t, const LossReductionConfig& cfg = {}) {
  detail::require(t >= 2 && t <= sc.device.size(), "loss reduction terms need 2 <= t <= context count");
  detail::require(cfg.draws >= 2, "loss reduction terms need at least two draws");
  const auto build = build_directory(sc.cloud, cfg.clusters_per_label, derive_seed(cfg.seed, 0xd1));
  const auto& dir = build.directory;

  std::vector<LabeledSample> past_samples;
  for (std::size_t i = 0; i + 1 < t; ++i)
    past_samples.insert(past_samples.end(), sc.device[i].samples.begin(), sc.device[i].samples.end());
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 0x1000);
  const auto model = train(LinearClassifier(sc.config.class_count, sc.config.feature_dim),
                           WeightedSamples{past_samples}, tc);

  std::vector<ContextWeights> past;
  for (std::size_t i = 1; i < t; ++i) past.push_back(compute_context_weights(sc.device[i - 1], dir, model, cfg.match, i));
  const auto summary = summarize_past(past, dir);
  const auto current = compute_context_weights(sc.device[t - 1], dir, model, cfg.match, t);

  SamplingConfig s0 = cfg.sampling;
  s0.alpha = 0.0;
  SamplingConfig s1 = cfg.sampling;
  s1.alpha = cfg.alpha;
  const auto plan0 = build_plan(current, dir, build.assignment, sc.cloud, summary, s0);
  const auto plan1 = build_plan(current, dir, build.assignment, sc.cloud, summary, s1);

  LossReductionReport r;
  r.context = t;
  const std::uint64_t draw_seed = derive_seed(cfg.seed, 0x3d);
  std::tie(r.new_variance_alpha0, r.past_variance_alpha0) =
      detail::plan_variances(plan0, dir, build.assignment, sc.cloud, summary.mean_past_feature, cfg.draws, draw_seed);
  std::tie(r.new_variance, r.past_variance) =
      detail::plan_variances(plan1, dir, build.assignment, sc.cloud, summary.mean_past_feature, cfg.draws, draw_seed);
  r.past_variance_exact_alpha0 = detail::plan_variance_exact(plan0, sc.cloud, summary.mean_past_feature);
  r.past_variance_exact = detail::plan_variance_exact(plan1, sc.cloud, summary.mean_past_feature);
  r.heterogeneity = heterogeneity(sc.device, t);
  r.alpha_reduces_past_variance = r.past_variance < r.past_variance_alpha0;

  std::vector<LabeledSample> eval;
  for (std::size_t i = 0; i < t; ++i) eval.insert(eval.end(), sc.test[i].samples.begin(), sc.test[i].samples.end());
  const auto batch = draw_samples(plan1, sc.cloud, build.assignment, derive_seed(cfg.seed, 0x5e));
  std::vector<LabeledSample> step_samples = sc.device[t - 1].samples;
  std::vector<double> step_weights(step_samples.size(), 1.0);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    step_samples.push_back(batch.samples[i]);
    step_weights.push_back(batch.importance_weights[i] * static_cast<double>(batch.size()));
  }
  const WeightedSamples step_data{step_samples, step_weights};
  r.smoothness = estimate_smoothness(model, step_data, 50, derive_seed(cfg.seed, 0x77));
  r.loss_before = dataset_loss(model, WeightedSamples{eval});
  std::vector<double> params(model.parameters().begin(), model.parameters().end());
  linalg::axpy(-cfg.step_size, dataset_gradient(model, step_data), params);
  const auto stepped = LinearClassifier::from_parameters(model.classes(), model.dim(), params);
  r.loss_after = dataset_loss(stepped, WeightedSamples{eval});
  r.loss_reduction = r.loss_before - r.loss_after;
  return r;
}

}  // namespace delta
