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

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "delta/core.hpp"
#include "delta/directory.hpp"

namespace delta {

using ContextId = std::size_t;

/// Directory weight vector of one context. Zero entries are never stored.
struct ContextWeights {
  ContextId context_id = 0;
  std::map<ClusterId, double> weights;
  std::size_t sample_count = 0;

  double total() const {
    double s = 0.0;
    for (const auto& [id, w] : weights) s += w;
    return s;
  }

  double at(ClusterId id) const {
    auto it = weights.find(id);
    return it == weights.end() ? 0.0 : it->second;
  }

  /// Same weights rescaled to sum to one.
  ContextWeights normalized() const {
    const double t = total();
    detail::require(t > 0.0, "cannot normalize an all-zero weight vector");
    ContextWeights out{context_id, {}, sample_count};
    for (const auto& [id, w] : weights) out.weights.emplace(id, w / t);
    return out;
  }

  friend bool operator==(const ContextWeights&, const ContextWeights&) = default;
};

enum class MatchMode { hard, soft };
enum class SimilarityMode { gradient, feature_distance };

struct MatchConfig {
  double temperature = 0.1;
  MatchMode mode = MatchMode::soft;
  SimilarityMode similarity = SimilarityMode::gradient;
  /// Restrict matches to directory entries carrying the sample's label.
  bool label_aware = true;
  /// Epsilon-ball settings forwarded to the gradient similarity.
  TrainConfig similarity_cfg{};
  /// Upload pruning: entries below this fraction of the total weight are dropped.
  double min_weight_fraction = 0.005;
};

namespace detail {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Precomputed per-entry gradients so that scoring many samples against one
/// directory does not recompute the medoid side.
class DirectoryScorer {
 public:
  DirectoryScorer(const Directory& dir, const LinearClassifier& model, const MatchConfig& cfg)
      : dir_(dir), cfg_(cfg) {
    require(!dir.empty(), "directory is empty");
    require(cfg.temperature > 0.0, "temperature must be positive");
    if (cfg.similarity == SimilarityMode::gradient) {
      models_ = perturbed_models(model, cfg.similarity_cfg);
      entry_grads_.resize(models_.size());
      for (std::size_t m = 0; m < models_.size(); ++m) {
        entry_grads_[m].reserve(dir.size());
        for (const auto& e : dir.entries)
          entry_grads_[m].push_back(per_sample_gradient(models_[m], LabeledSample{e.medoid, e.label}));
      }
    }
  }

  std::vector<double> scores(const LabeledSample& s) const {
    std::vector<double> out(dir_.size(), kNegInf);
    std::vector<GradientVector> sample_grads;
    if (cfg_.similarity == SimilarityMode::gradient) {
      sample_grads.reserve(models_.size());
      for (const auto& m : models_) sample_grads.push_back(per_sample_gradient(m, s));
    } else {
      require(s.feature.size() == dir_.feature_dim || dir_.feature_dim == 0, "feature dimension mismatch");
    }
    for (std::size_t c = 0; c < dir_.size(); ++c) {
      const auto& e = dir_.entries[c];
      if (cfg_.label_aware && e.label != s.label) continue;
      if (cfg_.similarity == SimilarityMode::feature_distance) {
        out[c] = -linalg::distance(s.feature, e.medoid);
      } else {
        double worst = 0.0;
        for (std::size_t m = 0; m < models_.size(); ++m)
          worst = std::max(worst, linalg::distance(sample_grads[m], entry_grads_[m][c]));
        out[c] = -worst;
      }
    }
    return out;
  }

 private:
  const Directory& dir_;
  MatchConfig cfg_;
  std::vector<LinearClassifier> models_;
  std::vector<std::vector<GradientVector>> entry_grads_;
};

}  // namespace detail

/// One similarity score per directory entry; excluded entries score -inf.
inline std::vector<double> sample_scores(const LabeledSample& sample, const Directory& dir,
                                         const LinearClassifier& model, const MatchConfig& cfg) {
  return detail::DirectoryScorer(dir, model, cfg).scores(sample);
}

/// Temperature softmax over scores; -inf scores receive exactly zero mass.
inline std::vector<double> soft_match_scores(std::span<const double> scores, double temperature) {
  detail::require(temperature > 0.0, "temperature must be positive");
  detail::require(!scores.empty(), "no scores to match");
  double best = detail::kNegInf;
  for (double s : scores) best = std::max(best, s);
  if (best == detail::kNegInf) throw InvalidArgument("no directory entry matches the sample label");
  std::vector<double> p(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] == detail::kNegInf) continue;
    p[i] = std::exp((scores[i] - best) / temperature);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

/// Argmax of scores with ties resolved to the lowest cluster id.
inline ClusterId hard_match_scores(std::span<const double> scores) {
  detail::require(!scores.empty(), "no scores to match");
  ClusterId best = 0;
  for (ClusterId c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  if (scores[best] == detail::kNegInf) throw InvalidArgument("no directory entry matches the sample label");
  return best;
}

inline ClusterId hard_match(const LabeledSample& sample, const Directory& dir, const LinearClassifier& model,
                            const MatchConfig& cfg) {
  return hard_match_scores(sample_scores(sample, dir, model, cfg));
}

inline std::vector<double> soft_match(const LabeledSample& sample, const Directory& dir,
                                      const LinearClassifier& model, const MatchConfig& cfg) {
  return soft_match_scores(sample_scores(sample, dir, model, cfg), cfg.temperature);
}

/// Accumulates per-sample match increments over the device dataset. The result
/// sums to the number of device samples.
inline ContextWeights compute_context_weights(const Dataset& device_data, const Directory& dir,
                                              const LinearClassifier& model, const MatchConfig& cfg,
                                              ContextId context_id = 0) {
  detail::require(!device_data.empty(), "device dataset is empty");
  const detail::DirectoryScorer scorer(dir, model, cfg);
  std::vector<double> acc(dir.size(), 0.0);
  for (const auto& s : device_data.samples) {
    const auto scores = scorer.scores(s);
    if (cfg.mode == MatchMode::hard) {
      acc[hard_match_scores(scores)] += 1.0;
    } else {
      const auto inc = soft_match_scores(scores, cfg.temperature);
      for (std::size_t c = 0; c < inc.size(); ++c) acc[c] += inc[c];
    }
  }
  ContextWeights out{context_id, {}, device_data.size()};
  for (ClusterId c = 0; c < acc.size(); ++c)
    if (acc[c] > 0.0) out.weights.emplace(c, acc[c]);
  return out;
}

/// Drops entries below `fraction` of the total and rescales the rest so the
/// total is unchanged. The largest entry always survives.
inline ContextWeights prune_weights(const ContextWeights& w, double fraction) {
  detail::require(fraction >= 0.0 && fraction < 1.0, "pruning fraction must be in [0, 1)");
  const double total = w.total();
  if (fraction == 0.0 || w.weights.empty()) return w;
  double largest = 0.0;
  for (const auto& [id, v] : w.weights) largest = std::max(largest, v);
  const double cutoff = std::min(fraction * total, largest);
  ContextWeights out{w.context_id, {}, w.sample_count};
  double kept = 0.0;
  for (const auto& [id, v] : w.weights)
    if (v >= cutoff) {
      out.weights.emplace(id, v);
      kept += v;
    }
  for (auto& [id, v] : out.weights) v *= total / kept;
  return out;
}

/// sum_c w_c phi(medoid_c) / sum_c w_c
inline FeatureVector weighted_directory_mean(const ContextWeights& w, const Directory& dir) {
  const double total = w.total();
  detail::require(total > 0.0, "weights sum to zero");
  FeatureVector m(dir.feature_dim, 0.0);
  for (const auto& [id, wc] : w.weights) linalg::axpy(wc / total, dir.at(id).medoid, m);
  return m;
}

}  // namespace delta
