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

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "delta/cloud.hpp"
#include "delta/device.hpp"
#include "delta/directory.hpp"
#include "delta/io.hpp"

namespace delta::protocol {

/// Stage 1: cloud -> device.
struct DirectoryDownload {
  std::uint64_t version = 0;
  Directory directory;
  friend bool operator==(const DirectoryDownload&, const DirectoryDownload&) = default;
};

/// Stage 2: device -> cloud. Carries the new context's weights followed by the
/// refreshed weights of every past context; never raw samples.
struct WeightUpload {
  std::string device_id;
  ContextId context_id = 0;
  std::vector<ContextWeights> contexts;
  friend bool operator==(const WeightUpload&, const WeightUpload&) = default;
};

/// Stage 3: cloud -> device.
struct EnrichmentResponse {
  EnrichedBatch batch;
  friend bool operator==(const EnrichmentResponse&, const EnrichmentResponse&) = default;
};

struct ErrorMessage {
  std::string code;
  std::string detail;
  friend bool operator==(const ErrorMessage&, const ErrorMessage&) = default;
};

using Message = std::variant<DirectoryDownload, WeightUpload, EnrichmentResponse, ErrorMessage>;

inline constexpr std::size_t kFrameHeaderBytes = 4;

namespace detail {

using io::json;

inline void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 3]));
}

inline void add_line(std::string& payload, const json& j) {
  payload += j.dump();
  payload.push_back('\n');
}

inline std::string payload_of(const DirectoryDownload& m) {
  std::string p;
  add_line(p, json{{"type", "directory_download"}, {"version", m.version}, {"count", m.directory.size()}});
  for (const auto& e : m.directory.entries) add_line(p, io::directory_record(e));
  return p;
}

inline std::string payload_of(const WeightUpload& m) {
  std::string p;
  add_line(p, json{{"type", "weight_upload"},
                   {"device_id", m.device_id},
                   {"context_id", m.context_id},
                   {"count", m.contexts.size()}});
  for (const auto& w : m.contexts) add_line(p, io::weights_record(w));
  return p;
}

inline std::string payload_of(const EnrichmentResponse& m) {
  std::string p;
  add_line(p, json{{"type", "enrichment_response"}, {"context_id", m.batch.context_id}, {"count", m.batch.size()}});
  for (std::size_t i = 0; i < m.batch.size(); ++i) add_line(p, io::enrichment_record(m.batch, i));
  return p;
}

inline std::string payload_of(const ErrorMessage& m) {
  std::string p;
  add_line(p, json{{"type", "error"}, {"code", m.code}, {"detail", m.detail}});
  return p;
}

/// Splits a payload into '\n'-terminated lines with their absolute offsets.
inline std::vector<std::pair<std::size_t, std::string_view>> lines_of(std::string_view payload, std::size_t base) {
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t at = 0;
  while (at < payload.size()) {
    const auto nl = payload.find('\n', at);
    if (nl == std::string_view::npos) throw DecodeError(base + at, "record is not newline-terminated");
    out.emplace_back(base + at, payload.substr(at, nl - at));
    at = nl + 1;
  }
  return out;
}

inline Message decode_payload(std::string_view payload, std::size_t base) {
  const auto lines = lines_of(payload, base);
  if (lines.empty()) throw DecodeError(base, "empty frame");
  const auto header = io::detail::parse_line(lines[0].second, lines[0].first);
  const auto type = io::detail::field<std::string>(header, "type", lines[0].first);
  auto expect_body = [&](std::size_t count) {
    if (lines.size() != count + 1)
      throw DecodeError(lines[0].first, "header announces " + std::to_string(count) + " records but frame has " +
                                            std::to_string(lines.size() - 1));
  };
  if (type == "directory_download") {
    DirectoryDownload m;
    m.version = io::detail::field<std::uint64_t>(header, "version", lines[0].first);
    expect_body(io::detail::field<std::size_t>(header, "count", lines[0].first));
    std::vector<DirectoryEntry> entries;
    for (std::size_t i = 1; i < lines.size(); ++i)
      entries.push_back(io::directory_entry_from(io::detail::parse_line(lines[i].second, lines[i].first), lines[i].first));
    m.directory = io::directory_from_entries(std::move(entries), lines[0].first);
    return m;
  }
  if (type == "weight_upload") {
    WeightUpload m;
    m.device_id = io::detail::field<std::string>(header, "device_id", lines[0].first);
    m.context_id = io::detail::field<std::size_t>(header, "context_id", lines[0].first);
    expect_body(io::detail::field<std::size_t>(header, "count", lines[0].first));
    for (std::size_t i = 1; i < lines.size(); ++i)
      m.contexts.push_back(io::weights_from(io::detail::parse_line(lines[i].second, lines[i].first), lines[i].first));
    return m;
  }
  if (type == "enrichment_response") {
    EnrichmentResponse m;
    m.batch.context_id = io::detail::field<std::size_t>(header, "context_id", lines[0].first);
    expect_body(io::detail::field<std::size_t>(header, "count", lines[0].first));
    for (std::size_t i = 1; i < lines.size(); ++i)
      io::append_enrichment_record(m.batch, io::detail::parse_line(lines[i].second, lines[i].first), lines[i].first);
    return m;
  }
  if (type == "error") {
    expect_body(0);
    return ErrorMessage{io::detail::field<std::string>(header, "code", lines[0].first),
                        io::detail::field<std::string>(header, "detail", lines[0].first)};
  }
  throw DecodeError(lines[0].first, "unknown message type \"" + type + "\"");
}

}  // namespace detail

/// One length-prefixed frame: 4-byte big-endian payload length, then the payload
/// (a header record line followed by body record lines).
inline std::string encode(const Message& msg) {
  const std::string payload = std::visit([](const auto& m) { return detail::payload_of(m); }, msg);
  std::string out;
  out.reserve(payload.size() + kFrameHeaderBytes);
  detail::put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out += payload;
  return out;
}

/// Decodes a concatenation of frames.
inline std::vector<Message> decode_stream(std::string_view bytes) {
  std::vector<Message> out;
  std::size_t at = 0;
  while (at < bytes.size()) {
    if (bytes.size() - at < kFrameHeaderBytes) throw DecodeError(at, "truncated frame length");
    const std::size_t len = detail::get_u32(bytes, at);
    if (bytes.size() - at - kFrameHeaderBytes < len)
      throw DecodeError(at, "frame length " + std::to_string(len) + " exceeds available bytes");
    out.push_back(detail::decode_payload(bytes.substr(at + kFrameHeaderBytes, len), at + kFrameHeaderBytes));
    at += kFrameHeaderBytes + len;
  }
  return out;
}

/// Decodes exactly one frame.
inline Message decode(std::string_view bytes) {
  auto msgs = decode_stream(bytes);
  if (msgs.size() != 1) throw DecodeError(0, "expected exactly one frame, found " + std::to_string(msgs.size()));
  return std::move(msgs.front());
}

inline const char* type_name(const Message& m) {
  static constexpr const char* names[] = {"directory_download", "weight_upload", "enrichment_response", "error"};
  return names[m.index()];
}

/// Per-device cloud state.
struct SessionState {
  std::string device_id;
  std::map<ContextId, ContextWeights> history;
  std::uint64_t directory_version = 0;
};

/// Raised on the device when the cloud answers with an Error message.
class SessionError : public Error {
 public:
  SessionError(std::string code, const std::string& detail)
      : Error(code + ": " + detail), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Cloud server: owns the pool, the directory and per-device session state.
class CloudService {
 public:
  CloudService(Dataset cloud, DirectoryBuild build, SamplingConfig cfg, std::uint64_t directory_version = 1)
      : cloud_(std::move(cloud)), build_(std::move(build)), cfg_(cfg), version_(directory_version) {}

  std::string directory_download() const { return encode(DirectoryDownload{version_, build_.directory}); }

  /// Handles one WeightUpload frame and returns the response frame.
  std::string handle(std::string_view request) {
    try {
      auto msg = decode(request);
      auto* up = std::get_if<WeightUpload>(&msg);
      if (!up) return encode(ErrorMessage{"unexpected_message", std::string("cloud cannot handle ") + type_name(msg)});
      return encode(EnrichmentResponse{serve(*up)});
    } catch (const DecodeError& e) {
      return encode(ErrorMessage{"decode_error", e.what()});
    } catch (const Error& e) {
      return encode(ErrorMessage{"invalid_request", e.what()});
    }
  }

  const SessionState* session(const std::string& device_id) const {
    auto it = sessions_.find(device_id);
    return it == sessions_.end() ? nullptr : &it->second;
  }

  const Dataset& cloud() const noexcept { return cloud_; }
  const DirectoryBuild& build() const noexcept { return build_; }
  const SamplingConfig& config() const noexcept { return cfg_; }

  /// Past summary the cloud would use for `context_id` given stored history.
  std::optional<PastContextSummary> past_summary(const SessionState& s, ContextId context_id) const {
    std::vector<ContextWeights> past;
    for (const auto& [id, w] : s.history)
      if (id < context_id) past.push_back(w);
    if (past.empty()) return std::nullopt;
    return summarize_past(past, build_.directory);
  }

  std::uint64_t context_seed(const std::string& device_id, ContextId context_id) const {
    return derive_seed(cfg_.seed ^ detail::fnv1a(device_id), context_id);
  }

 private:
  EnrichedBatch serve(const WeightUpload& up) {
    ::delta::detail::require(up.context_id >= 1, "context ids start at 1");
    ::delta::detail::require(up.contexts.size() == up.context_id,
                             "upload must carry weights for contexts 1.." + std::to_string(up.context_id));
    for (std::size_t i = 0; i < up.contexts.size(); ++i) {
      const auto& w = up.contexts[i];
      ::delta::detail::require(w.context_id == i + 1, "upload contexts must be ordered 1..t");
      for (const auto& [id, v] : w.weights)
        ::delta::detail::require(id < build_.directory.size(), "weight for unknown cluster " + std::to_string(id));
    }
    auto& state = sessions_[up.device_id];
    state.device_id = up.device_id;
    state.directory_version = version_;
    state.history.clear();
    for (const auto& w : up.contexts) state.history[w.context_id] = w;

    const auto past = past_summary(state, up.context_id);
    const auto plan = build_plan(state.history.at(up.context_id), build_.directory, build_.assignment, cloud_, past, cfg_);
    return draw_samples(plan, cloud_, build_.assignment, context_seed(up.device_id, up.context_id), cfg_.replacement);
  }

  Dataset cloud_;
  DirectoryBuild build_;
  SamplingConfig cfg_;
  std::uint64_t version_;
  std::map<std::string, SessionState> sessions_;
};

/// Device side: holds the downloaded directory and computes weight uploads.
class DeviceAgent {
 public:
  DeviceAgent(std::string device_id, MatchConfig cfg) : id_(std::move(device_id)), cfg_(cfg) {}

  void receive_directory(std::string_view bytes) {
    auto msg = decode(bytes);
    auto* dd = std::get_if<DirectoryDownload>(&msg);
    if (!dd) throw Error(std::string("expected directory_download, got ") + type_name(msg));
    directory_ = std::move(dd->directory);
    version_ = dd->version;
  }

  bool has_directory() const noexcept { return directory_.has_value(); }
  const Directory& directory() const {
    if (!directory_) throw Error("directory has not been downloaded");
    return *directory_;
  }

  /// Weights for contexts 1..t recomputed against the current head; each pruned
  /// and normalized.
  WeightUpload make_upload(ContextId context_id, std::span<const Dataset> context_data,
                           const LinearClassifier& model) const {
    ::delta::detail::require(context_id >= 1 && context_data.size() == context_id,
                             "device must hold data for contexts 1..t");
    WeightUpload up{id_, context_id, {}};
    for (ContextId t = 1; t <= context_id; ++t)
      up.contexts.push_back(
          prune_weights(compute_context_weights(context_data[t - 1], directory(), model, cfg_, t),
                        cfg_.min_weight_fraction)
              .normalized());
    return up;
  }

  EnrichedBatch receive_response(std::string_view bytes) const {
    auto msg = decode(bytes);
    if (auto* err = std::get_if<ErrorMessage>(&msg)) throw SessionError(err->code, err->detail);
    auto* resp = std::get_if<EnrichmentResponse>(&msg);
    if (!resp) throw Error(std::string("expected enrichment_response, got ") + type_name(msg));
    return std::move(resp->batch);
  }

  const std::string& id() const noexcept { return id_; }
  const MatchConfig& config() const noexcept { return cfg_; }

 private:
  std::string id_;
  MatchConfig cfg_;
  std::optional<Directory> directory_;
  std::uint64_t version_ = 0;
};

enum class Direction { up, down };

struct TranscriptFrame {
  Direction direction;
  std::string bytes;
};

/// Every byte exchanged between one device and the cloud.
struct Transcript {
  std::vector<TranscriptFrame> frames;

  void record(Direction d, std::string bytes) { frames.push_back({d, std::move(bytes)}); }

  std::size_t bytes(Direction d) const {
    std::size_t n = 0;
    for (const auto& f : frames)
      if (f.direction == d) n += f.bytes.size();
    return n;
  }

  std::string concatenated() const {
    std::string all;
    for (const auto& f : frames) all += f.bytes;
    return all;
  }
};

/// Stage 1: distribute the directory to the device.
inline void distribute_directory(DeviceAgent& device, const CloudService& cloud, Transcript* transcript = nullptr) {
  auto bytes = cloud.directory_download();
  device.receive_directory(bytes);
  if (transcript) transcript->record(Direction::down, std::move(bytes));
}

/// Stages 2-3: weight upload, plan + draw on the cloud, enriched batch download.
inline EnrichedBatch run_enrichment_session(const DeviceAgent& device, CloudService& cloud, ContextId context_id,
                                            std::span<const Dataset> context_data, const LinearClassifier& model,
                                            Transcript* transcript = nullptr) {
  auto request = encode(device.make_upload(context_id, context_data, model));
  auto response = cloud.handle(request);
  if (transcript) {
    transcript->record(Direction::up, std::move(request));
    transcript->record(Direction::down, response);
  }
  return device.receive_response(response);
}

/// Size in bytes of each context's weight record inside an upload frame.
inline std::vector<std::size_t> weight_record_sizes(const WeightUpload& up) {
  std::vector<std::size_t> out;
  for (const auto& w : up.contexts) out.push_back(io::weights_record(w).dump().size() + 1);
  return out;
}

}  // namespace delta::protocol
