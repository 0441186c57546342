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

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "delta/cloud.hpp"
#include "delta/core.hpp"
#include "delta/device.hpp"
#include "delta/directory.hpp"

// Line-delimited JSON records. Objects serialize with sorted keys and doubles in
// shortest round-trip form, so encoding is canonical.
namespace delta::io {

using json = nlohmann::json;

namespace detail {

inline json feature_json(std::span<const double> f) {
  json arr = json::array();
  for (double v : f) {
    ::delta::detail::require(std::isfinite(v), "cannot encode a non-finite value");
    arr.push_back(v);
  }
  return arr;
}

inline FeatureVector feature_from(const json& j, std::size_t line, std::string_view field) {
  if (!j.is_array()) throw DecodeError(line, std::string(field) + " must be an array");
  FeatureVector out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DecodeError(line, std::string(field) + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

template <typename T>
T field(const json& j, const char* key, std::size_t pos) {
  auto it = j.find(key);
  if (it == j.end()) throw DecodeError(pos, std::string("missing field \"") + key + "\"");
  try {
    if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw DecodeError(pos, std::string("field \"") + key + "\" must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw DecodeError(pos, std::string("field \"") + key + "\" must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw DecodeError(pos, std::string("field \"") + key + "\" must be a string");
    }
    return it->get<T>();
  } catch (const json::exception& e) {
    throw DecodeError(pos, std::string("field \"") + key + "\": " + e.what());
  }
}

/// `pos` is either a line number or the byte offset of the line start; in the
/// latter case the parser's offset within the line is added to it.
inline json parse_line(std::string_view line, std::size_t pos, bool byte_offsets = true) {
  try {
    auto j = json::parse(line);
    if (!j.is_object()) throw DecodeError(pos, "record is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    const std::size_t at = byte_offsets ? pos + e.byte - (e.byte > 0 ? 1 : 0) : pos;
    throw DecodeError(at, std::string("invalid JSON: ") + e.what());
  } catch (const json::exception& e) {  // e.g. numeric overflow
    throw DecodeError(pos, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace detail

// ---- embedding datasets: {"feature": [...], "id": str, "label": int}

inline json sample_record(const LabeledSample& s, const std::string& id) {
  return json{{"id", id}, {"label", s.label}, {"feature", detail::feature_json(s.feature)}};
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
  for (std::size_t i = 0; i < d.size(); ++i)
    os << sample_record(d.samples[i], d.id + "/" + std::to_string(i)).dump() << '\n';
}

/// Reads an embedding dataset. Error positions are 1-based line numbers.
inline Dataset read_dataset(std::istream& is, std::string id = {}) {
  Dataset d;
  d.id = std::move(id);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = detail::parse_line(line, lineno, false);
    detail::field<std::string>(j, "id", lineno);
    LabeledSample s;
    s.label = detail::field<std::size_t>(j, "label", lineno);
    if (!j.contains("feature")) throw DecodeError(lineno, "missing field \"feature\"");
    s.feature = detail::feature_from(j.at("feature"), lineno, "feature");
    if (!d.empty() && s.feature.size() != d.feature_dim())
      throw DecodeError(lineno, "feature dimension " + std::to_string(s.feature.size()) + " differs from " +
                                    std::to_string(d.feature_dim()));
    if (s.feature.empty()) throw DecodeError(lineno, "empty feature vector");
    d.samples.push_back(std::move(s));
  }
  return d;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path);
  return read_dataset(in, path);
}

// ---- directory: {"cluster_id", "dispersion", "label", "medoid", "member_count"}

inline json directory_record(const DirectoryEntry& e) {
  return json{{"cluster_id", e.cluster_id},
              {"label", e.label},
              {"medoid", detail::feature_json(e.medoid)},
              {"dispersion", e.dispersion},
              {"member_count", e.member_count}};
}

inline DirectoryEntry directory_entry_from(const json& j, std::size_t pos) {
  DirectoryEntry e;
  e.cluster_id = detail::field<std::size_t>(j, "cluster_id", pos);
  e.label = detail::field<std::size_t>(j, "label", pos);
  if (!j.contains("medoid")) throw DecodeError(pos, "missing field \"medoid\"");
  e.medoid = detail::feature_from(j.at("medoid"), pos, "medoid");
  e.dispersion = detail::field<double>(j, "dispersion", pos);
  e.member_count = detail::field<std::size_t>(j, "member_count", pos);
  if (e.dispersion < 0.0) throw DecodeError(pos, "dispersion must be non-negative");
  return e;
}

/// Rebuilds a directory from entries; feature_dim and class_count are derived.
inline Directory directory_from_entries(std::vector<DirectoryEntry> entries, std::size_t pos = 0) {
  Directory d;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].cluster_id != i) throw DecodeError(pos, "directory cluster ids must be 0..n-1 in order");
    if (i > 0 && entries[i].medoid.size() != entries[0].medoid.size())
      throw DecodeError(pos, "directory medoids have mixed dimensions");
    d.class_count = std::max(d.class_count, entries[i].label + 1);
  }
  d.feature_dim = entries.empty() ? 0 : entries[0].medoid.size();
  d.entries = std::move(entries);
  return d;
}

inline void write_directory(std::ostream& os, const Directory& dir) {
  for (const auto& e : dir.entries) os << directory_record(e).dump() << '\n';
}

inline Directory read_directory(std::istream& is) {
  std::vector<DirectoryEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    entries.push_back(directory_entry_from(detail::parse_line(line, lineno, false), lineno));
  }
  return directory_from_entries(std::move(entries), lineno);
}

// ---- weight upload: {"context_id", "sample_count", "weights": {"<id>": w}}

inline json weights_record(const ContextWeights& w) {
  json weights = json::object();
  for (const auto& [id, v] : w.weights) {
    if (v == 0.0) continue;
    ::delta::detail::require(std::isfinite(v) && v > 0.0, "weights must be finite and positive");
    weights[std::to_string(id)] = v;
  }
  return json{{"context_id", w.context_id}, {"sample_count", w.sample_count}, {"weights", std::move(weights)}};
}

inline ContextWeights weights_from(const json& j, std::size_t pos) {
  ContextWeights w;
  w.context_id = detail::field<std::size_t>(j, "context_id", pos);
  w.sample_count = detail::field<std::size_t>(j, "sample_count", pos);
  auto it = j.find("weights");
  if (it == j.end() || !it->is_object()) throw DecodeError(pos, "field \"weights\" must be an object");
  for (const auto& [key, val] : it->items()) {
    ClusterId id = 0;
    const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
    if (key.empty() || ec != std::errc{} || end != key.data() + key.size() || key[0] == '+')
      throw DecodeError(pos, "weight key \"" + key + "\" is not a cluster id");
    if (!val.is_number() || !(val.get<double>() > 0.0)) throw DecodeError(pos, "weight values must be positive numbers");
    w.weights.emplace(id, val.get<double>());
  }
  return w;
}

// ---- enrichment records:
// {"cloud_index", "cluster_id", "context_id", "feature", "importance_weight", "label"}

inline json enrichment_record(const EnrichedBatch& b, std::size_t i) {
  ::delta::detail::require(std::isfinite(b.importance_weights[i]), "importance weight must be finite");
  return json{{"context_id", b.context_id},
              {"cluster_id", b.provenance[i].cluster_id},
              {"cloud_index", b.provenance[i].cloud_index},
              {"label", b.samples[i].label},
              {"feature", detail::feature_json(b.samples[i].feature)},
              {"importance_weight", b.importance_weights[i]}};
}

inline void append_enrichment_record(EnrichedBatch& b, const json& j, std::size_t pos) {
  const auto ctx = detail::field<std::size_t>(j, "context_id", pos);
  if (ctx != b.context_id) throw DecodeError(pos, "record context_id does not match the batch");
  Provenance p;
  p.cluster_id = detail::field<std::size_t>(j, "cluster_id", pos);
  p.cloud_index = detail::field<std::size_t>(j, "cloud_index", pos);
  LabeledSample s;
  s.label = detail::field<std::size_t>(j, "label", pos);
  if (!j.contains("feature")) throw DecodeError(pos, "missing field \"feature\"");
  s.feature = detail::feature_from(j.at("feature"), pos, "feature");
  const double u = detail::field<double>(j, "importance_weight", pos);
  if (!(u > 0.0)) throw DecodeError(pos, "importance weight must be positive");
  b.samples.push_back(std::move(s));
  b.importance_weights.push_back(u);
  b.provenance.push_back(p);
}

}  // namespace delta::io
