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
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "delta/core.hpp"

namespace delta {

using ClusterId = std::size_t;

/// Hard assignment of points to clusters.
struct ClusterAssignment {
  std::vector<ClusterId> cluster_of;    ///< one entry per point
  std::vector<FeatureVector> centers;   ///< indexed by ClusterId
  std::vector<std::size_t> medoid_index;  ///< point index of each cluster's medoid (may be empty)
  std::vector<double> objective_trace;  ///< SSE after every assignment step (k-means only)

  std::size_t cluster_count() const noexcept { return centers.size(); }

  /// Point indices grouped by cluster, in ascending point order.
  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> out(centers.size());
    for (std::size_t i = 0; i < cluster_of.size(); ++i) out[cluster_of[i]].push_back(i);
    return out;
  }
};

struct DirectoryEntry {
  ClusterId cluster_id = 0;
  FeatureVector medoid;
  Label label = 0;
  double dispersion = 0.0;  ///< mean distance of cluster members to the medoid
  std::size_t member_count = 0;

  friend bool operator==(const DirectoryEntry&, const DirectoryEntry&) = default;
};

/// Compact labelled summary of the cloud pool. Entry i has cluster_id i.
struct Directory {
  std::vector<DirectoryEntry> entries;
  std::size_t feature_dim = 0;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  const DirectoryEntry& at(ClusterId id) const {
    detail::require(id < entries.size(), "unknown cluster id " + std::to_string(id));
    return entries[id];
  }

  friend bool operator==(const Directory&, const Directory&) = default;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

namespace detail {

inline double assign_points(std::span<const FeatureVector> pts, const std::vector<FeatureVector>& centers,
                            std::vector<ClusterId>& cluster_of) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    ClusterId arg = 0;
    for (ClusterId c = 0; c < centers.size(); ++c) {
      const double d = linalg::squared_distance(pts[i], centers[c]);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    cluster_of[i] = arg;
    sse += best;
  }
  return sse;
}

inline std::vector<FeatureVector> kmeanspp_seed(std::span<const FeatureVector> pts, std::size_t k, Rng& rng) {
  const std::size_t n = pts.size();
  std::vector<FeatureVector> centers;
  std::vector<bool> chosen(n, false);
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  centers.push_back(pts[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = linalg::squared_distance(pts[i], pts[first]);
  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      pick = draw_categorical(rng, d2);
    } else {
      // all remaining points coincide with a center: take the lowest unchosen index
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[pick] = true;
    centers.push_back(pts[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], linalg::squared_distance(pts[i], pts[pick]));
  }
  return centers;
}

inline double assignment_sse(std::span<const FeatureVector> pts, const std::vector<FeatureVector>& centers,
                             const std::vector<ClusterId>& cluster_of) {
  double sse = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) sse += linalg::squared_distance(pts[i], centers[cluster_of[i]]);
  return sse;
}

/// Moves the point farthest from its center (among clusters with two or more
/// members) into each empty cluster and makes it that cluster's center.
inline void repair_empty(std::span<const FeatureVector> pts, std::vector<FeatureVector>& centers,
                         std::vector<std::size_t>& counts, std::vector<ClusterId>& cluster_of) {
  for (ClusterId c = 0; c < centers.size(); ++c) {
    if (counts[c] > 0) continue;
    std::size_t far = pts.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (counts[cluster_of[i]] <= 1) continue;
      const double d = linalg::squared_distance(pts[i], centers[cluster_of[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == pts.size()) continue;  // unreachable while k <= n
    --counts[cluster_of[far]];
    cluster_of[far] = c;
    counts[c] = 1;
    centers[c] = pts[far];
  }
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Empty clusters are repaired by moving
/// the point farthest from its current center into them.
inline ClusterAssignment kmeans_cluster(std::span<const FeatureVector> pts, std::size_t k, std::uint64_t seed,
                                        const KMeansOptions& opts = {}) {
  detail::require(k >= 1, "k must be at least 1");
  detail::require(k <= pts.size(), "k=" + std::to_string(k) + " exceeds number of points " +
                                       std::to_string(pts.size()));
  detail::require(opts.max_iters >= 1, "max_iters must be at least 1");
  const std::size_t dim = pts.front().size();
  for (const auto& p : pts) detail::require(p.size() == dim, "points have mixed dimensions");

  Rng rng = make_rng(seed);
  ClusterAssignment out;
  out.centers = detail::kmeanspp_seed(pts, k, rng);
  out.cluster_of.assign(pts.size(), 0);

  for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
    out.objective_trace.push_back(detail::assign_points(pts, out.centers, out.cluster_of));

    std::vector<FeatureVector> next(k, FeatureVector(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      linalg::axpy(1.0, pts[i], next[out.cluster_of[i]]);
      ++counts[out.cluster_of[i]];
    }
    for (ClusterId c = 0; c < k; ++c)
      if (counts[c] > 0) linalg::scale_in_place(next[c], 1.0 / static_cast<double>(counts[c]));

    detail::repair_empty(pts, next, counts, out.cluster_of);

    double moved = 0.0;
    for (ClusterId c = 0; c < k; ++c) moved = std::max(moved, linalg::distance(next[c], out.centers[c]));
    out.centers = std::move(next);
    if (moved < opts.tol) break;
  }
  out.objective_trace.push_back(detail::assign_points(pts, out.centers, out.cluster_of));
  std::vector<std::size_t> counts(k, 0);
  for (auto c : out.cluster_of) ++counts[c];
  if (std::find(counts.begin(), counts.end(), 0) != counts.end()) {
    detail::repair_empty(pts, out.centers, counts, out.cluster_of);
    out.objective_trace.back() = detail::assignment_sse(pts, out.centers, out.cluster_of);
  }
  return out;
}

/// Index of the member nearest to `center`; ties go to the lowest index.
inline std::size_t select_medoid(std::span<const FeatureVector> members, std::span<const double> center) {
  detail::require(!members.empty(), "medoid of an empty cluster");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const double d = linalg::squared_distance(members[i], center);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

/// Mean Euclidean distance of cluster members to the medoid.
inline double cluster_dispersion(std::span<const FeatureVector> members, std::span<const double> medoid) {
  detail::require(!members.empty(), "dispersion of an empty cluster");
  double total = 0.0;
  for (const auto& m : members) total += linalg::distance(m, medoid);
  return total / static_cast<double>(members.size());
}

struct DirectoryBuild {
  Directory directory;
  ClusterAssignment assignment;  ///< indexed by cloud sample; cluster ids match directory entries
};

inline constexpr std::size_t kDefaultClustersPerLabel = 20;

/// Per-label k-means over the cloud pool, one medoid entry per cluster.
/// Entries are ordered by label, then by cluster index within the label.
inline DirectoryBuild build_directory(const Dataset& cloud, std::size_t clusters_per_label, std::uint64_t seed,
                                      const KMeansOptions& opts = {}) {
  detail::require(!cloud.empty(), "cannot build a directory from an empty cloud dataset");
  detail::require(clusters_per_label >= 1, "clusters_per_label must be at least 1");
  const std::size_t dim = cloud.feature_dim();

  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    detail::require(cloud.samples[i].feature.size() == dim, "cloud samples have mixed dimensions");
    by_label[cloud.samples[i].label].push_back(i);
  }

  DirectoryBuild out;
  out.directory.feature_dim = dim;
  out.directory.class_count = by_label.rbegin()->first + 1;
  out.assignment.cluster_of.assign(cloud.size(), 0);

  for (const auto& [label, idx] : by_label) {
    std::vector<FeatureVector> pts;
    pts.reserve(idx.size());
    for (auto i : idx) pts.push_back(cloud.samples[i].feature);
    const std::size_t k = std::min(clusters_per_label, pts.size());
    auto local = kmeans_cluster(pts, k, derive_seed(seed, label), opts);
    const auto members = local.members();
    const ClusterId base = out.directory.entries.size();
    for (ClusterId c = 0; c < k; ++c) {
      std::vector<FeatureVector> mf;
      mf.reserve(members[c].size());
      for (auto m : members[c]) mf.push_back(pts[m]);
      const std::size_t med = select_medoid(mf, local.centers[c]);
      DirectoryEntry e;
      e.cluster_id = base + c;
      e.medoid = mf[med];
      e.label = label;
      e.dispersion = cluster_dispersion(mf, e.medoid);
      e.member_count = mf.size();
      out.directory.entries.push_back(std::move(e));
      out.assignment.centers.push_back(local.centers[c]);
      out.assignment.medoid_index.push_back(idx[members[c][med]]);
      for (auto m : members[c]) out.assignment.cluster_of[idx[m]] = base + c;
    }
  }
  return out;
}

}  // namespace delta
