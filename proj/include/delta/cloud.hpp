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
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "delta/core.hpp"
#include "delta/device.hpp"
#include "delta/directory.hpp"

namespace delta {

enum class Replacement { with, without };

/// Shape of the all-contexts sampling probability.
///  - root_sum_squares: p ∝ sqrt(d_medoid^2 + alpha * d_past^2)
///  - additive:         p ∝ d_medoid + alpha * d_past
enum class PastTermForm { root_sum_squares, additive };

struct SamplingConfig {
  std::size_t budget_per_class = 25;
  double alpha = 1.0;
  /// Floor added to every distance is floor_scale * (1 + mean distance of the cluster).
  double floor_scale = 1e-12;
  Replacement replacement = Replacement::with;
  PastTermForm past_form = PastTermForm::root_sum_squares;
  /// Every weighted cluster gets at least this many samples when the budget allows.
  std::size_t min_cluster_size = 1;
  std::uint64_t seed = 0;
};

/// Cloud-side stand-in for the mean feature of all past device contexts: the
/// average of the weighted-directory means of contexts 1..t-1.
struct PastContextSummary {
  FeatureVector mean_past_feature;
};

inline PastContextSummary summarize_past(std::span<const ContextWeights> past, const Directory& dir) {
  detail::require(!past.empty(), "past summary needs at least one past context");
  FeatureVector m(dir.feature_dim, 0.0);
  for (const auto& w : past) linalg::axpy(1.0, weighted_directory_mean(w, dir), m);
  linalg::scale_in_place(m, 1.0 / static_cast<double>(past.size()));
  return {std::move(m)};
}

struct ClusterPlan {
  ClusterId cluster_id = 0;
  double weight = 0.0;              ///< normalized directory weight w_c
  std::size_t size = 0;             ///< |S_c|
  std::vector<std::size_t> members; ///< cloud indices, ascending
  std::vector<double> probs;        ///< sampling probability per member

  friend bool operator==(const ClusterPlan&, const ClusterPlan&) = default;
};

struct SamplingPlan {
  ContextId context_id = 0;
  std::vector<ClusterPlan> clusters;  ///< matched clusters in ascending id order
  std::size_t total_size = 0;

  const ClusterPlan* find(ClusterId id) const {
    for (const auto& c : clusters)
      if (c.cluster_id == id) return &c;
    return nullptr;
  }

  friend bool operator==(const SamplingPlan&, const SamplingPlan&) = default;
};

struct Provenance {
  ClusterId cluster_id = 0;
  std::size_t cloud_index = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct EnrichedBatch {
  ContextId context_id = 0;
  std::vector<LabeledSample> samples;
  std::vector<double> importance_weights;
  std::vector<Provenance> provenance;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  friend bool operator==(const EnrichedBatch&, const EnrichedBatch&) = default;
};

/// Counts feature-vector visits made while building a plan.
struct PlanStats {
  std::size_t member_visits = 0;
};

namespace detail {

inline double distance_floor(double mean_distance, double floor_scale) {
  return floor_scale * (1.0 + mean_distance);
}

inline std::vector<double> normalize_with_floor(std::vector<double> mags, double floor_scale) {
  double mean = 0.0;
  for (double m : mags) mean += m;
  mean /= static_cast<double>(mags.size());
  const double floor = distance_floor(mean, floor_scale);
  double total = 0.0;
  for (auto& m : mags) {
    m += floor;
    total += m;
  }
  for (auto& m : mags) m /= total;
  return mags;
}

/// Hamilton apportionment of `budget` units over non-negative quotas, with
/// optional per-entry caps. Ties in remainders go to the lower index.
inline std::vector<std::size_t> largest_remainder(std::span<const double> shares, std::size_t budget,
                                                  std::span<const std::size_t> caps = {},
                                                  std::span<const std::size_t> floors = {}) {
  const std::size_t n = shares.size();
  std::vector<std::size_t> out(n, 0);
  std::vector<bool> fixed(n, false);
  std::size_t remaining = budget;
  std::vector<double> quota(n, 0.0);
  // Quotas are recomputed after every round of fixing; caps are settled before floors.
  for (;;) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) total += shares[i];
    if (total <= 0.0) {
      require(remaining == 0 && std::find(fixed.begin(), fixed.end(), true) != fixed.end(),
              "all allocation shares are zero");
      break;
    }
    for (std::size_t i = 0; i < n; ++i)
      if (!fixed[i]) quota[i] = static_cast<double>(remaining) * shares[i] / total;
    bool changed = false;
    for (std::size_t i = 0; i < n && !caps.empty(); ++i) {
      if (fixed[i] || quota[i] <= static_cast<double>(caps[i])) continue;
      fixed[i] = true;
      out[i] = caps[i];
      remaining -= caps[i];
      changed = true;
    }
    if (changed) continue;
    for (std::size_t i = 0; i < n && !floors.empty(); ++i) {
      if (fixed[i] || quota[i] >= static_cast<double>(floors[i])) continue;
      fixed[i] = true;
      out[i] = std::min(floors[i], remaining);
      remaining -= out[i];
      changed = true;
    }
    if (!changed) break;
  }
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (fixed[i]) continue;
    out[i] = static_cast<std::size_t>(std::floor(quota[i]));
    assigned += out[i];
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (!fixed[i] && shares[i] > 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
  });
  std::size_t left = remaining - assigned;
  for (std::size_t pass = 0; left > 0; ++pass) {
    bool progressed = false;
    for (std::size_t i : order) {
      if (left == 0) break;
      if (!caps.empty() && out[i] >= caps[i]) continue;
      ++out[i];
      --left;
      progressed = true;
    }
    require(progressed, "cluster capacities are smaller than the budget");
  }
  return out;
}

}  // namespace detail

/// Inter-cluster sizes |S_c| ∝ w_c * dispersion_c, rounded by largest remainder.
/// Returns one entry per weighted cluster (in ascending id order).
inline std::map<ClusterId, std::size_t> allocate_sizes(const ContextWeights& weights, const Directory& dir,
                                                        std::size_t budget, const SamplingConfig& cfg = {}) {
  detail::require(budget >= 1, "budget must be at least 1");
  std::vector<ClusterId> ids;
  std::vector<double> disp;
  double mean_disp = 0.0;
  for (const auto& [id, w] : weights.weights) {
    detail::require(w >= 0.0 && std::isfinite(w), "weights must be finite and non-negative");
    ids.push_back(id);
    disp.push_back(dir.at(id).dispersion);
    mean_disp += disp.back();
  }
  detail::require(!ids.empty(), "no matched clusters to allocate");
  mean_disp /= static_cast<double>(ids.size());
  const double floor = detail::distance_floor(mean_disp, cfg.floor_scale);
  std::vector<double> shares(ids.size());
  std::vector<std::size_t> caps, floors;
  const bool use_floor = cfg.min_cluster_size > 0 && cfg.min_cluster_size * ids.size() <= budget;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    shares[i] = weights.at(ids[i]) * (disp[i] > 0.0 ? disp[i] : floor);
    if (cfg.replacement == Replacement::without) caps.push_back(dir.at(ids[i]).member_count);
    if (use_floor) floors.push_back(std::min(cfg.min_cluster_size, caps.empty() ? cfg.min_cluster_size : caps.back()));
  }
  const auto sizes = detail::largest_remainder(shares, budget, caps, floors);
  std::map<ClusterId, std::size_t> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], sizes[i]);
  return out;
}

/// p_i ∝ ||phi(x_i) - phi(medoid)|| + floor.
inline std::vector<double> intra_cluster_probs(std::span<const FeatureVector> members,
                                               std::span<const double> medoid, double floor_scale = 1e-12) {
  detail::require(!members.empty(), "probabilities of an empty cluster");
  std::vector<double> d(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) d[i] = linalg::distance(members[i], medoid);
  return detail::normalize_with_floor(std::move(d), floor_scale);
}

/// Probabilities balancing closeness to the new context (medoid distance) and
/// to past contexts (distance to the past summary).
inline std::vector<double> reoptimized_probs(std::span<const FeatureVector> members, std::span<const double> medoid,
                                             const PastContextSummary& past, double alpha,
                                             PastTermForm form = PastTermForm::root_sum_squares,
                                             double floor_scale = 1e-12) {
  detail::require(!members.empty(), "probabilities of an empty cluster");
  detail::require(alpha >= 0.0, "alpha must be non-negative");
  std::vector<double> mags(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double dc = linalg::distance(members[i], medoid);
    const double dp = linalg::distance(members[i], past.mean_past_feature);
    mags[i] = form == PastTermForm::root_sum_squares ? std::sqrt(dc * dc + alpha * dp * dp) : dc + alpha * dp;
  }
  return detail::normalize_with_floor(std::move(mags), floor_scale);
}

/// u = w_c / (|S_c| * |D_c| * p_i); makes sum_{i in S_c} u_i phi(x_i) an unbiased
/// estimate of w_c times the cluster mean.
inline double importance_weight(double w_c, std::size_t plan_size, std::size_t member_count, double p_i) {
  if (!(p_i > 0.0)) throw InvalidArgument("importance weight needs a positive sampling probability");
  detail::require(plan_size >= 1 && member_count >= 1, "plan size and member count must be positive");
  return w_c / (static_cast<double>(plan_size) * static_cast<double>(member_count) * p_i);
}

/// Number of distinct labels carrying positive weight.
inline std::size_t weighted_class_count(const ContextWeights& w, const Directory& dir) {
  std::set<Label> labels;
  for (const auto& [id, wc] : w.weights)
    if (wc > 0.0) labels.insert(dir.at(id).label);
  return labels.size();
}

/// Composes inter-cluster allocation with intra-cluster probabilities for all
/// weighted clusters. Visits each cloud feature at most once.
inline SamplingPlan build_plan(const ContextWeights& weights, const Directory& dir, const ClusterAssignment& assignment,
                               const Dataset& cloud, const std::optional<PastContextSummary>& past,
                               const SamplingConfig& cfg, PlanStats* stats = nullptr) {
  detail::require(assignment.cluster_of.size() == cloud.size(), "assignment does not cover the cloud dataset");
  detail::require(assignment.cluster_count() == dir.size(), "assignment does not match the directory");
  const auto w = weights.normalized();
  const std::size_t budget = cfg.budget_per_class * weighted_class_count(w, dir);
  const auto sizes = allocate_sizes(w, dir, budget, cfg);

  std::map<ClusterId, std::vector<std::size_t>> members;
  for (const auto& [id, s] : sizes) members[id];
  for (std::size_t i = 0; i < assignment.cluster_of.size(); ++i) {
    auto it = members.find(assignment.cluster_of[i]);
    if (it != members.end()) it->second.push_back(i);
  }

  const bool reopt = past.has_value() && cfg.alpha > 0.0;
  SamplingPlan plan;
  plan.context_id = weights.context_id;
  for (const auto& [id, size] : sizes) {
    ClusterPlan cp;
    cp.cluster_id = id;
    cp.weight = w.at(id);
    cp.size = size;
    cp.members = std::move(members[id]);
    detail::require(!cp.members.empty(), "cluster " + std::to_string(id) + " has no cloud members");
    std::vector<FeatureVector> feats;
    feats.reserve(cp.members.size());
    for (auto i : cp.members) feats.push_back(cloud.samples[i].feature);
    if (stats) stats->member_visits += feats.size();
    const auto& medoid = dir.at(id).medoid;
    cp.probs = reopt ? reoptimized_probs(feats, medoid, *past, cfg.alpha, cfg.past_form, cfg.floor_scale)
                     : intra_cluster_probs(feats, medoid, cfg.floor_scale);
    plan.total_size += size;
    plan.clusters.push_back(std::move(cp));
  }
  return plan;
}

/// Draws |S_c| members per cluster from its plan probabilities, one generator per
/// cluster seeded with (context_seed ^ cluster_id).
inline EnrichedBatch draw_samples(const SamplingPlan& plan, const Dataset& cloud, const ClusterAssignment& assignment,
                                  std::uint64_t context_seed, Replacement replacement = Replacement::with) {
  EnrichedBatch batch;
  batch.context_id = plan.context_id;
  for (const auto& cp : plan.clusters) {
    detail::require(cp.members.size() == cp.probs.size(), "plan probabilities do not match members");
    for (auto i : cp.members) {
      detail::require(i < cloud.size() && assignment.cluster_of.at(i) == cp.cluster_id,
                      "plan is inconsistent with the cluster assignment");
    }
    if (cp.size == 0) continue;
    if (replacement == Replacement::without && cp.size > cp.members.size())
      throw InvalidArgument("cannot draw " + std::to_string(cp.size) + " samples without replacement from " +
                            std::to_string(cp.members.size()) + " members");
    Rng rng = make_rng(context_seed ^ static_cast<std::uint64_t>(cp.cluster_id));
    std::vector<double> remaining = cp.probs;
    for (std::size_t k = 0; k < cp.size; ++k) {
      const std::size_t j = draw_categorical(rng, remaining);
      const std::size_t idx = cp.members[j];
      batch.samples.push_back(cloud.samples[idx]);
      batch.importance_weights.push_back(importance_weight(cp.weight, cp.size, cp.members.size(), cp.probs[j]));
      batch.provenance.push_back({cp.cluster_id, idx});
      if (replacement == Replacement::without) remaining[j] = 0.0;
    }
  }
  return batch;
}

/// sum_{i in S_c} u_i phi(x_i): unbiased for w_c times the cluster feature mean.
inline FeatureVector cluster_feature_estimate(const EnrichedBatch& batch, ClusterId id, std::size_t dim) {
  FeatureVector est(dim, 0.0);
  for (std::size_t i = 0; i < batch.size(); ++i)
    if (batch.provenance[i].cluster_id == id) linalg::axpy(batch.importance_weights[i], batch.samples[i].feature, est);
  return est;
}

/// w_c phi(medoid) + sum_{i in S_c} u_i (phi(x_i) - phi(medoid)): the same target
/// estimated through medoid-centred deviations, whose variance the sampling
/// probabilities minimize.
inline FeatureVector anchored_feature_estimate(const EnrichedBatch& batch, ClusterId id, double w_c,
                                               std::span<const double> medoid) {
  FeatureVector est(medoid.begin(), medoid.end());
  linalg::scale_in_place(est, w_c);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.provenance[i].cluster_id != id) continue;
    const auto dev = linalg::subtract(batch.samples[i].feature, medoid);
    linalg::axpy(batch.importance_weights[i], dev, est);
  }
  return est;
}

}  // namespace delta
