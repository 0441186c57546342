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
#include <optional>
#include <string>
#include <vector>

#include "delta/cloud.hpp"
#include "delta/core.hpp"
#include "delta/device.hpp"
#include "delta/directory.hpp"
#include "delta/protocol.hpp"
#include "delta/scenario.hpp"

namespace delta {

enum class Method { delta, random, vanilla };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::delta: return "delta";
    case Method::random: return "random";
    case Method::vanilla: return "vanilla";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "delta") return Method::delta;
  if (s == "random") return Method::random;
  if (s == "vanilla") return Method::vanilla;
  throw InvalidArgument("unknown method \"" + s + "\"");
}

struct RunConfig {
  Method method = Method::delta;
  TrainConfig train{0.05, 30, 16, 0, 0.0, 0};
  MatchConfig match{};
  SamplingConfig sampling{};
  std::size_t clusters_per_label = kDefaultClustersPerLabel;
  /// Evaluate after every epoch instead of once per context.
  bool per_epoch_checkpoints = false;
  std::uint64_t seed = 0;
};

/// acc[t][e]: accuracy on context t's test set at checkpoint e. Entries before
/// the checkpoint at which context t starts training are NaN.
struct AccuracyHistory {
  std::vector<std::vector<double>> acc;
  std::vector<std::size_t> first_checkpoint;  ///< first checkpoint index of each context

  std::size_t contexts() const noexcept { return acc.size(); }
  std::size_t checkpoints() const noexcept { return acc.empty() ? 0 : acc.front().size(); }
};

struct MetricsReport {
  double overall = 0.0;
  double plasticity = 0.0;
  double stability = 0.0;
  std::vector<double> per_context_final;
  std::size_t bytes_uploaded = 0;
  std::size_t bytes_downloaded = 0;
};

namespace detail {

inline void check_history(const AccuracyHistory& h) {
  require(!h.acc.empty(), "history has no contexts");
  require(h.first_checkpoint.size() == h.acc.size(), "history is incomplete: missing first checkpoints");
  const std::size_t n = h.checkpoints();
  require(n >= 1, "history has no checkpoints");
  for (std::size_t t = 0; t < h.acc.size(); ++t) {
    require(h.acc[t].size() == n, "history is incomplete: ragged checkpoints");
    require(h.first_checkpoint[t] < n, "history is incomplete: context never evaluated");
    for (std::size_t e = h.first_checkpoint[t]; e < n; ++e) {
      const double a = h.acc[t][e];
      require(std::isfinite(a) && a >= 0.0 && a <= 1.0,
              "history is incomplete: context " + std::to_string(t + 1) + " lacks checkpoint " + std::to_string(e));
    }
  }
}

inline double peak(const AccuracyHistory& h, std::size_t t) {
  double best = 0.0;
  for (std::size_t e = h.first_checkpoint[t]; e < h.checkpoints(); ++e) best = std::max(best, h.acc[t][e]);
  return best;
}

}  // namespace detail

/// Mean over contexts of the final-checkpoint accuracy.
inline double metric_overall(const AccuracyHistory& h) {
  detail::check_history(h);
  double s = 0.0;
  for (const auto& row : h.acc) s += row.back();
  return s / static_cast<double>(h.contexts());
}

/// Mean over contexts of the peak accuracy reached after the context appeared.
inline double metric_plasticity(const AccuracyHistory& h) {
  detail::check_history(h);
  double s = 0.0;
  for (std::size_t t = 0; t < h.contexts(); ++t) s += detail::peak(h, t);
  return s / static_cast<double>(h.contexts());
}

/// Mean over contexts of final / peak accuracy (0/0 counts as 1).
inline double metric_stability(const AccuracyHistory& h) {
  detail::check_history(h);
  double s = 0.0;
  for (std::size_t t = 0; t < h.contexts(); ++t) {
    const double p = detail::peak(h, t);
    s += p == 0.0 ? 1.0 : h.acc[t].back() / p;
  }
  return s / static_cast<double>(h.contexts());
}

struct RunResult {
  MetricsReport metrics;
  AccuracyHistory history;
  LinearClassifier model;
  protocol::Transcript transcript;
  std::vector<EnrichedBatch> batches;           ///< retained enrichment per context
  std::vector<ContextWeights> uploaded_weights;  ///< latest uploaded weights per context (delta only)
};

/// Uniform random cloud samples of the given classes, without replacement.
inline EnrichedBatch random_enrichment(const Dataset& cloud, const std::vector<Label>& classes, std::size_t budget,
                                       ContextId context_id, std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (std::find(classes.begin(), classes.end(), cloud.samples[i].label) != classes.end()) pool.push_back(i);
  Rng rng = make_rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(budget, pool.size()));
  std::sort(pool.begin(), pool.end());
  EnrichedBatch b;
  b.context_id = context_id;
  for (auto i : pool) {
    b.samples.push_back(cloud.samples[i]);
    b.importance_weights.push_back(1.0 / static_cast<double>(pool.size()));
    b.provenance.push_back({0, i});
  }
  return b;
}

/// Training weights of a retained batch: importance weights scaled by the batch
/// size, so the batch carries (in expectation) one unit of mass per sample.
inline std::vector<double> replay_weights(const EnrichedBatch& b) {
  std::vector<double> w = b.importance_weights;
  linalg::scale_in_place(w, static_cast<double>(b.size()));
  return w;
}

/// The continual-learning loop: enrich context t, train the head on device data
/// plus every retained enriched batch, evaluate on all seen test sets.
inline RunResult run_continual_learning(const Scenario& sc, const RunConfig& cfg) {
  const auto& scfg = sc.config;
  const std::size_t T = scfg.context_count;
  const bool enrich = cfg.method != Method::vanilla && cfg.sampling.budget_per_class > 0;

  RunResult res;
  res.model = LinearClassifier(scfg.class_count, scfg.feature_dim);

  std::optional<protocol::CloudService> cloud;
  std::optional<protocol::DeviceAgent> device;
  if (enrich && cfg.method == Method::delta) {
    SamplingConfig sampling = cfg.sampling;
    sampling.seed = derive_seed(cfg.seed, 0x5a);
    cloud.emplace(sc.cloud, build_directory(sc.cloud, cfg.clusters_per_label, derive_seed(cfg.seed, 0xd1)), sampling);
    device.emplace("device-0", cfg.match);
    protocol::distribute_directory(*device, *cloud, &res.transcript);
  }

  res.history.acc.assign(T, {});
  res.history.first_checkpoint.assign(T, 0);
  auto checkpoint = [&](std::size_t seen) {
    for (std::size_t i = 0; i < T; ++i)
      res.history.acc[i].push_back(i < seen ? evaluate(res.model, sc.test[i]) : std::numeric_limits<double>::quiet_NaN());
  };

  for (std::size_t t = 1; t <= T; ++t) {
    if (enrich) {
      if (cfg.method == Method::delta) {
        res.batches.push_back(protocol::run_enrichment_session(
            *device, *cloud, t, std::span<const Dataset>(sc.device).first(t), res.model, &res.transcript));
      } else {
        const auto& classes = scfg.contexts[t - 1].classes;
        res.batches.push_back(random_enrichment(sc.cloud, classes, cfg.sampling.budget_per_class * classes.size(), t,
                                                derive_seed(cfg.seed, 0x7a00 + t)));
      }
    }

    std::vector<LabeledSample> samples;
    std::vector<double> weights;
    for (std::size_t i = 0; i < t; ++i) {
      for (const auto& s : sc.device[i].samples) {
        samples.push_back(s);
        weights.push_back(1.0);
      }
    }
    for (const auto& b : res.batches) {
      const auto w = replay_weights(b);
      samples.insert(samples.end(), b.samples.begin(), b.samples.end());
      weights.insert(weights.end(), w.begin(), w.end());
    }

    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, 0x1000 + t);
    res.history.first_checkpoint[t - 1] = res.history.checkpoints();
    if (cfg.per_epoch_checkpoints) {
      const std::size_t epochs = tc.epochs;
      tc.epochs = 1;
      for (std::size_t e = 0; e < epochs; ++e) {
        tc.seed = derive_seed(cfg.seed, 0x100000 + t * 4096 + e);
        res.model = train(res.model, WeightedSamples{samples, weights}, tc);
        checkpoint(t);
      }
      if (epochs == 0) checkpoint(t);
    } else {
      if (tc.epochs > 0) res.model = train(res.model, WeightedSamples{samples, weights}, tc);
      checkpoint(t);
    }
  }

  if (cloud) {
    if (const auto* s = cloud->session(device->id()))
      for (const auto& [id, w] : s->history) res.uploaded_weights.push_back(w);
  }

  auto& m = res.metrics;
  m.overall = metric_overall(res.history);
  m.plasticity = metric_plasticity(res.history);
  m.stability = metric_stability(res.history);
  for (const auto& row : res.history.acc) m.per_context_final.push_back(row.back());
  m.bytes_uploaded = res.transcript.bytes(protocol::Direction::up);
  m.bytes_downloaded = res.transcript.bytes(protocol::Direction::down);
  return res;
}

}  // namespace delta
