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
#include <cstdint>
#include <vector>

#include "delta/delta.hpp"

// Independent reference implementations and instance generators shared by the
// unit tests and the acceptance binary.
namespace delta::fixtures {

/// Gaussian blobs, one per label, `per_label` samples each.
inline Dataset blob_cloud(std::uint64_t seed, std::size_t labels, std::size_t per_label, std::size_t dim,
                          double centre_scale = 3.0, double spread = 1.0) {
  Rng rng = make_rng(seed);
  Dataset d{"cloud", {}};
  for (Label c = 0; c < labels; ++c) {
    const auto centre = normal_vector(rng, dim, centre_scale);
    for (std::size_t i = 0; i < per_label; ++i) {
      auto x = normal_vector(rng, dim, spread);
      linalg::axpy(1.0, centre, x);
      d.samples.push_back({std::move(x), c});
    }
  }
  return d;
}

inline LinearClassifier random_model(std::uint64_t seed, std::size_t classes, std::size_t dim, double scale = 0.5) {
  Rng rng = make_rng(seed);
  return LinearClassifier::from_parameters(classes, dim, normal_vector(rng, classes * dim + classes, scale));
}

/// Cross-entropy written out directly: log(sum exp z) - z_y, with weights.
inline double reference_loss(const std::vector<double>& params, std::size_t classes, std::size_t dim,
                             const std::vector<LabeledSample>& samples, const std::vector<double>& weights) {
  double total = 0.0, wsum = 0.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    std::vector<double> z(classes);
    double zmax = -1e300;
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = params[classes * dim + c];
      for (std::size_t j = 0; j < dim; ++j) z[c] += params[c * dim + j] * samples[n].feature[j];
      zmax = std::max(zmax, z[c]);
    }
    double se = 0.0;
    for (double v : z) se += std::exp(v - zmax);
    total += weights[n] * (zmax + std::log(se) - z[samples[n].label]);
    wsum += weights[n];
  }
  return total / wsum;
}

/// Central finite differences of reference_loss.
inline std::vector<double> finite_difference_gradient(const LinearClassifier& model,
                                                      const std::vector<LabeledSample>& samples,
                                                      const std::vector<double>& weights, double h = 1e-5) {
  std::vector<double> p(model.parameters().begin(), model.parameters().end());
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = reference_loss(p, model.classes(), model.dim(), samples, weights);
    p[i] = keep - h;
    const double down = reference_loss(p, model.classes(), model.dim(), samples, weights);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    scale = std::max(scale, std::max(std::abs(a[i]), std::abs(b[i])));
  }
  return std::sqrt(diff) / std::max(scale, 1e-12);
}

/// A single-cluster plan over explicit member features (cloud indices 0..n-1).
struct SingleCluster {
  Dataset cloud;
  ClusterAssignment assignment;
  Directory directory;
};

inline SingleCluster single_cluster(const std::vector<FeatureVector>& members, std::size_t medoid_index) {
  SingleCluster s;
  for (const auto& m : members) s.cloud.samples.push_back({m, 0});
  s.assignment.cluster_of.assign(members.size(), 0);
  s.assignment.centers.push_back(members[medoid_index]);
  s.assignment.medoid_index.push_back(medoid_index);
  DirectoryEntry e;
  e.medoid = members[medoid_index];
  e.dispersion = cluster_dispersion(members, e.medoid);
  e.member_count = members.size();
  s.directory.entries.push_back(e);
  s.directory.feature_dim = members.front().size();
  s.directory.class_count = 1;
  return s;
}

inline SamplingPlan single_plan(const SingleCluster& s, std::size_t size, std::vector<double> probs, double w = 1.0) {
  SamplingPlan plan;
  plan.context_id = 1;
  ClusterPlan cp;
  cp.cluster_id = 0;
  cp.weight = w;
  cp.size = size;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) cp.members.push_back(i);
  cp.probs = std::move(probs);
  plan.clusters.push_back(std::move(cp));
  plan.total_size = size;
  return plan;
}

/// Trace of the sample covariance of a set of vectors.
inline double trace_variance(const std::vector<FeatureVector>& xs) {
  const double n = static_cast<double>(xs.size());
  FeatureVector mean(xs.front().size(), 0.0);
  for (const auto& x : xs) linalg::axpy(1.0 / n, x, mean);
  double s = 0.0;
  for (const auto& x : xs) s += linalg::squared_distance(x, mean);
  return s / (n - 1.0);
}

}  // namespace delta::fixtures
