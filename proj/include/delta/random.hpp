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
#include <random>
#include <span>
#include <vector>

namespace delta {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive decorrelated child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return mix_seed(parent ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix_seed(seed)); }

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline std::vector<double> normal_vector(Rng& rng, std::size_t dim, double scale = 1.0) {
  std::vector<double> v(dim);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

/// Uniform direction on the unit sphere in `dim` dimensions.
inline std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  for (;;) {
    auto v = normal_vector(rng, dim);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (auto& x : v) x *= inv;
      return v;
    }
  }
}

/// Index drawn from a categorical distribution with (unnormalized) weights.
inline std::size_t draw_categorical(Rng& rng, std::span<const double> weights) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return dist(rng);
}

}  // namespace delta
