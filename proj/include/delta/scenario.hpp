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
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "delta/core.hpp"

namespace delta {

/// One context of the device stream: which classes appear and how the
/// context's class-conditional Gaussians are shifted and spread.
struct ContextSpec {
  std::vector<Label> classes;
  /// Norm of the offset shared by every class mean in this context.
  double domain_shift = 6.0;
  /// Norm of an additional per-(context, class) offset.
  double class_shift = 0.0;
  /// Per-coordinate standard deviation of the isotropic noise.
  double noise_scale = 1.0;
  /// Standard deviation along the context's nuisance directions.
  double nuisance_scale = 7.0;

  friend bool operator==(const ContextSpec&, const ContextSpec&) = default;
};

/// Synthetic continual-learning scenario. Every (context, class) pair defines a
/// Gaussian centred at mu_class + delta_context + delta_(context,class) with
/// isotropic noise plus high-variance noise along a few context-specific
/// nuisance directions. The cloud pool holds
/// samples of every class under every context's conditions, mixed and shuffled;
/// the device sees only its context's classes.
struct ScenarioConfig {
  std::size_t class_count = 10;
  std::size_t context_count = 5;
  std::size_t feature_dim = 32;
  /// Norm of each class mean vector.
  double class_separation = 4.0;
  std::vector<ContextSpec> contexts;
  std::size_t cloud_samples = 60;   ///< per (context, class)
  std::size_t device_samples = 5;   ///< per class of the context
  std::size_t test_samples = 100;   ///< per class of the context
  /// When positive, samples are generated in this raw dimension and mapped to
  /// feature_dim by a seeded random projection.
  std::size_t raw_dim = 0;
  /// Number of random nuisance directions per context.
  std::size_t nuisance_rank = 4;
  std::uint64_t seed = 1;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

inline constexpr std::size_t kDefaultDeviceSamplesPerClass = 5;

/// T=5 contexts over C=10 classes, two new classes per context, d=32.
inline ScenarioConfig default_scenario_config(std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.device_samples = kDefaultDeviceSamplesPerClass;
  for (std::size_t t = 0; t < cfg.context_count; ++t)
    cfg.contexts.push_back(ContextSpec{{2 * t, 2 * t + 1}, 6.0, 0.0, 1.0, 7.0});
  return cfg;
}

inline void validate(const ScenarioConfig& cfg) {
  detail::require(cfg.class_count >= 1, "class_count must be at least 1");
  detail::require(cfg.feature_dim >= 1, "feature_dim must be at least 1");
  detail::require(cfg.context_count >= 1, "context_count must be at least 1");
  detail::require(cfg.contexts.size() == cfg.context_count,
                  "contexts lists " + std::to_string(cfg.contexts.size()) + " entries but context_count is " +
                      std::to_string(cfg.context_count));
  for (std::size_t t = 0; t < cfg.contexts.size(); ++t) {
    const auto& c = cfg.contexts[t];
    detail::require(!c.classes.empty(), "context " + std::to_string(t + 1) + " has no classes");
    for (auto k : c.classes)
      detail::require(k < cfg.class_count, "context " + std::to_string(t + 1) + " uses class " + std::to_string(k) +
                                               " >= class_count");
    detail::require(c.noise_scale >= 0.0 && c.nuisance_scale >= 0.0 && c.domain_shift >= 0.0 && c.class_shift >= 0.0,
                    "noise and shift scales must be non-negative");
  }
  detail::require(cfg.device_samples >= 1 && cfg.test_samples >= 1, "device and test sample counts must be positive");
}

struct Scenario {
  ScenarioConfig config;
  Dataset cloud;
  std::vector<Dataset> device;  ///< index t-1 for context t
  std::vector<Dataset> test;
  /// Configured mean feature of each (context, class), indexed [t][class].
  std::vector<std::vector<FeatureVector>> means;
};

/// Deterministic given cfg.seed.
inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  validate(cfg);
  const std::size_t gen_dim = cfg.raw_dim > 0 ? cfg.raw_dim : cfg.feature_dim;
  std::optional<RandomProjectionExtractor> projection;
  if (cfg.raw_dim > 0) projection.emplace(cfg.raw_dim, cfg.feature_dim, derive_seed(cfg.seed, 0xfeed));

  Scenario sc;
  sc.config = cfg;
  Rng mean_rng = make_rng(derive_seed(cfg.seed, 1));
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(gen_dim));
  std::vector<FeatureVector> class_mean(cfg.class_count);
  for (auto& m : class_mean) m = normal_vector(mean_rng, gen_dim, cfg.class_separation * inv_sqrt_d);
  std::vector<std::vector<FeatureVector>> raw_means(cfg.context_count, std::vector<FeatureVector>(cfg.class_count));
  for (std::size_t t = 0; t < cfg.context_count; ++t) {
    const auto shift = normal_vector(mean_rng, gen_dim, cfg.contexts[t].domain_shift * inv_sqrt_d);
    for (std::size_t k = 0; k < cfg.class_count; ++k) {
      auto m = normal_vector(mean_rng, gen_dim, cfg.contexts[t].class_shift * inv_sqrt_d);
      linalg::axpy(1.0, class_mean[k], m);
      linalg::axpy(1.0, shift, m);
      raw_means[t][k] = std::move(m);
    }
  }

  std::vector<std::vector<FeatureVector>> nuisance(cfg.context_count);
  for (auto& dirs : nuisance)
    for (std::size_t r = 0; r < cfg.nuisance_rank; ++r) dirs.push_back(unit_direction(mean_rng, gen_dim));

  auto embed = [&](FeatureVector raw) { return projection ? (*projection)(raw) : raw; };
  sc.means.resize(cfg.context_count);
  for (std::size_t t = 0; t < cfg.context_count; ++t)
    for (const auto& m : raw_means[t]) sc.means[t].push_back(embed(m));

  auto draw = [&](Rng& rng, std::size_t t, Label k) {
    auto x = normal_vector(rng, gen_dim, cfg.contexts[t].noise_scale);
    linalg::axpy(1.0, raw_means[t][k], x);
    for (const auto& u : nuisance[t]) linalg::axpy(cfg.contexts[t].nuisance_scale * standard_normal(rng), u, x);
    return LabeledSample{embed(std::move(x)), k};
  };

  Rng cloud_rng = make_rng(derive_seed(cfg.seed, 2));
  sc.cloud.id = "cloud";
  for (std::size_t t = 0; t < cfg.context_count; ++t)
    for (Label k = 0; k < cfg.class_count; ++k)
      for (std::size_t i = 0; i < cfg.cloud_samples; ++i) sc.cloud.samples.push_back(draw(cloud_rng, t, k));
  std::shuffle(sc.cloud.samples.begin(), sc.cloud.samples.end(), cloud_rng);

  for (std::size_t t = 0; t < cfg.context_count; ++t) {
    Rng dev_rng = make_rng(derive_seed(cfg.seed, 100 + t));
    Rng test_rng = make_rng(derive_seed(cfg.seed, 200 + t));
    Dataset dev{"device/" + std::to_string(t + 1), {}};
    Dataset test{"test/" + std::to_string(t + 1), {}};
    for (Label k : cfg.contexts[t].classes) {
      for (std::size_t i = 0; i < cfg.device_samples; ++i) dev.samples.push_back(draw(dev_rng, t, k));
      for (std::size_t i = 0; i < cfg.test_samples; ++i) test.samples.push_back(draw(test_rng, t, k));
    }
    sc.device.push_back(std::move(dev));
    sc.test.push_back(std::move(test));
  }
  return sc;
}

// ---- scenario config file (JSON document)

inline nlohmann::json to_json(const ScenarioConfig& cfg) {
  nlohmann::json contexts = nlohmann::json::array();
  for (const auto& c : cfg.contexts)
    contexts.push_back({{"classes", c.classes},
                        {"domain_shift", c.domain_shift},
                        {"class_shift", c.class_shift},
                        {"noise_scale", c.noise_scale},
                        {"nuisance_scale", c.nuisance_scale}});
  return {{"class_count", cfg.class_count},         {"context_count", cfg.context_count},
          {"feature_dim", cfg.feature_dim},         {"class_separation", cfg.class_separation},
          {"contexts", contexts},                   {"cloud_samples", cfg.cloud_samples},
          {"device_samples", cfg.device_samples},   {"test_samples", cfg.test_samples},
          {"raw_dim", cfg.raw_dim},                 {"nuisance_rank", cfg.nuisance_rank},
          {"seed", cfg.seed}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("scenario config must be a JSON object");
  static const char* known[] = {"class_count", "context_count", "feature_dim", "class_separation", "contexts",
                                "cloud_samples", "device_samples", "test_samples", "raw_dim", "nuisance_rank", "seed"};
  for (const auto& [key, val] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw InvalidArgument("unknown scenario config key \"" + key + "\"");
  }
  for (const char* key : {"class_count", "context_count", "feature_dim", "cloud_samples", "device_samples",
                          "test_samples", "raw_dim", "nuisance_rank", "seed"})
    if (j.contains(key) && !j.at(key).is_number_unsigned())
      throw InvalidArgument(std::string("scenario config key \"") + key + "\" must be a non-negative integer");
  ScenarioConfig cfg;
  cfg.contexts.clear();
  try {
    cfg.class_count = j.value("class_count", cfg.class_count);
    cfg.context_count = j.value("context_count", cfg.context_count);
    cfg.feature_dim = j.value("feature_dim", cfg.feature_dim);
    cfg.class_separation = j.value("class_separation", cfg.class_separation);
    cfg.cloud_samples = j.value("cloud_samples", cfg.cloud_samples);
    cfg.device_samples = j.value("device_samples", cfg.device_samples);
    cfg.test_samples = j.value("test_samples", cfg.test_samples);
    cfg.raw_dim = j.value("raw_dim", cfg.raw_dim);
    cfg.nuisance_rank = j.value("nuisance_rank", cfg.nuisance_rank);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("contexts")) {
      for (const auto& c : j.at("contexts")) {
        ContextSpec spec;
        spec.classes = c.at("classes").get<std::vector<Label>>();
        spec.domain_shift = c.value("domain_shift", spec.domain_shift);
        spec.class_shift = c.value("class_shift", spec.class_shift);
        spec.noise_scale = c.value("noise_scale", spec.noise_scale);
        spec.nuisance_scale = c.value("nuisance_scale", spec.nuisance_scale);
        cfg.contexts.push_back(std::move(spec));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed scenario config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario config " + path);
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument("scenario config " + path + " is not valid JSON: " + e.what());
  }
}

}  // namespace delta
