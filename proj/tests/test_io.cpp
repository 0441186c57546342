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

#include <gtest/gtest.h>

#include <functional>
#include <limits>
#include <sstream>

#include "delta/io.hpp"
#include "support.hpp"

using namespace delta;

namespace {

std::size_t decode_position(const std::function<void()>& f) {
  try {
    f();
  } catch (const DecodeError& e) {
    return e.position();
  }
  ADD_FAILURE() << "expected DecodeError";
  return 0;
}

Dataset read_text(const std::string& text) {
  std::istringstream in(text);
  return io::read_dataset(in);
}

}  // namespace

TEST(Dataset, RoundTripIsExact) {
  auto d = fixtures::blob_cloud(1, 3, 7, 5);
  d.samples[0].feature[0] = 0.1;  // not exactly representable
  d.samples[1].feature[1] = -1e-300;
  d.samples[2].feature[2] = 123456789.123456789;
  std::ostringstream out;
  io::write_dataset(out, d);
  std::istringstream in(out.str());
  const auto back = io::read_dataset(in, d.id);
  EXPECT_EQ(back, d);
  std::ostringstream again;
  io::write_dataset(again, back);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Dataset, ErrorsReportTheLineNumber) {
  const std::string good = R"({"feature":[1.0,2.0],"id":"a","label":0})";
  EXPECT_EQ(decode_position([&] { read_text(good + "\n" + good + "\n{\"feature\":[1.0],\"id\":\"c\",\"label\":0}\n"); }),
            3u);
  EXPECT_EQ(decode_position([&] { read_text(good + "\nnot json\n"); }), 2u);
  EXPECT_EQ(decode_position([&] { read_text(R"({"feature":[1.0],"id":"a","label":-1})"); }), 1u);
  EXPECT_EQ(decode_position([&] { read_text(R"({"id":"a","label":1})"); }), 1u);
  EXPECT_EQ(decode_position([&] { read_text(R"({"feature":["x"],"id":"a","label":1})"); }), 1u);
  EXPECT_EQ(decode_position([&] { read_text(R"({"feature":[],"id":"a","label":1})"); }), 1u);
  EXPECT_EQ(decode_position([&] { read_text("\n\n[1,2]\n"); }), 3u);
  // Blank lines are skipped but still counted.
  EXPECT_EQ(read_text("\n" + good + "\n\n").size(), 1u);
}

TEST(Dataset, NonFiniteValuesAreRejectedOnWrite) {
  Dataset d{"d", {{{1.0, std::numeric_limits<double>::quiet_NaN()}, 0}}};
  std::ostringstream out;
  EXPECT_THROW(io::write_dataset(out, d), InvalidArgument);
  d.samples[0].feature[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(io::write_dataset(out, d), InvalidArgument);
}

TEST(DirectoryFile, RoundTripAndValidation) {
  const auto cloud = fixtures::blob_cloud(2, 3, 10, 4);
  const auto b = build_directory(cloud, 2, 1);
  std::ostringstream out;
  io::write_directory(out, b.directory);
  std::istringstream in(out.str());
  EXPECT_EQ(io::read_directory(in), b.directory);

  Directory one;
  one.entries.push_back({0, {0.5}, 3, 0.0, 1});
  one.feature_dim = 1;
  one.class_count = 4;
  std::ostringstream o1;
  io::write_directory(o1, one);
  std::istringstream i1(o1.str());
  EXPECT_EQ(io::read_directory(i1), one);

  const auto bad = [](const std::string& text) {
    std::istringstream is(text);
    io::read_directory(is);
  };
  EXPECT_THROW(bad(R"({"cluster_id":1,"dispersion":0,"label":0,"medoid":[1],"member_count":1})"), DecodeError);
  EXPECT_THROW(bad(R"({"cluster_id":0,"dispersion":-1,"label":0,"medoid":[1],"member_count":1})"), DecodeError);
  EXPECT_THROW(bad(R"({"cluster_id":0,"dispersion":0,"label":0,"member_count":1})"), DecodeError);
  EXPECT_THROW(bad("{\"cluster_id\":0,\"dispersion\":0,\"label\":0,\"medoid\":[1],\"member_count\":1}\n"
                   "{\"cluster_id\":1,\"dispersion\":0,\"label\":0,\"medoid\":[1,2],\"member_count\":1}\n"),
               DecodeError);
}

TEST(Weights, RoundTripDropsZeroEntries) {
  const ContextWeights w{4, {{0, 0.25}, {3, 0.0}, {17, 7.5}}, 12};
  const auto j = io::weights_record(w);
  EXPECT_EQ(j.dump(), R"({"context_id":4,"sample_count":12,"weights":{"0":0.25,"17":7.5}})");
  const auto back = io::weights_from(j, 0);
  EXPECT_EQ(back.context_id, 4u);
  EXPECT_EQ(back.sample_count, 12u);
  EXPECT_EQ(back.weights, (std::map<ClusterId, double>{{0, 0.25}, {17, 7.5}}));
  EXPECT_EQ(io::weights_from(io::weights_record(ContextWeights{1, {}, 0}), 0).weights.size(), 0u);
}

TEST(Weights, RejectsMalformedRecords) {
  using io::json;
  EXPECT_THROW(io::weights_from(json::parse(R"({"context_id":1,"sample_count":1,"weights":{"a":1}})"), 5),
               DecodeError);
  EXPECT_THROW(io::weights_from(json::parse(R"({"context_id":1,"sample_count":1,"weights":{"1":-1}})"), 5),
               DecodeError);
  EXPECT_THROW(io::weights_from(json::parse(R"({"context_id":-1,"sample_count":1,"weights":{}})"), 5), DecodeError);
  EXPECT_THROW(io::weights_from(json::parse(R"({"context_id":1,"weights":{}})"), 5), DecodeError);
  EXPECT_THROW(io::weights_from(json::parse(R"({"context_id":1,"sample_count":1,"weights":[]})"), 5), DecodeError);
  EXPECT_EQ(decode_position([] { io::weights_from(io::json::parse(R"({"context_id":1})"), 42); }), 42u);
  EXPECT_THROW(io::weights_record(ContextWeights{1, {{0, std::numeric_limits<double>::infinity()}}, 1}),
               InvalidArgument);
}

TEST(Enrichment, RecordRoundTrip) {
  EnrichedBatch b;
  b.context_id = 3;
  b.samples = {{{0.1, 0.2}, 1}, {{-3.0, 4.5}, 0}};
  b.importance_weights = {0.125, 2.0 / 3.0};
  b.provenance = {{4, 17}, {0, 2}};
  EnrichedBatch back;
  back.context_id = 3;
  for (std::size_t i = 0; i < b.size(); ++i) io::append_enrichment_record(back, io::enrichment_record(b, i), i);
  EXPECT_EQ(back, b);
}

TEST(Enrichment, RejectsBadRecords) {
  EnrichedBatch b;
  b.context_id = 3;
  const auto rec = [](const std::string& s) { return io::json::parse(s); };
  EXPECT_THROW(io::append_enrichment_record(
                   b, rec(R"({"cloud_index":0,"cluster_id":0,"context_id":2,"feature":[1],"importance_weight":1,"label":0})"), 0),
               DecodeError);
  EXPECT_THROW(io::append_enrichment_record(
                   b, rec(R"({"cloud_index":0,"cluster_id":0,"context_id":3,"feature":[1],"importance_weight":0,"label":0})"), 0),
               DecodeError);
  EXPECT_THROW(io::append_enrichment_record(
                   b, rec(R"({"cloud_index":0,"cluster_id":0,"context_id":3,"importance_weight":1,"label":0})"), 0),
               DecodeError);
  EXPECT_EQ(b.size(), 0u);
  b.samples = {{{1.0}, 0}};
  b.importance_weights = {std::numeric_limits<double>::quiet_NaN()};
  b.provenance = {{0, 0}};
  EXPECT_THROW(io::enrichment_record(b, 0), InvalidArgument);
}
