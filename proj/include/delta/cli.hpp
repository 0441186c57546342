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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "delta/harness.hpp"
#include "delta/io.hpp"
#include "delta/oracle.hpp"
#include "delta/protocol.hpp"
#include "delta/scenario.hpp"

namespace delta::cli {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Bad flags or config values; maps to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Everything a run needs: the scenario and the method settings.
struct CliConfig {
  ScenarioConfig scenario = default_scenario_config();
  RunConfig run{};
};

inline json run_to_json(const RunConfig& r) {
  return {{"method", method_name(r.method)},
          {"seed", r.seed},
          {"budget_per_class", r.sampling.budget_per_class},
          {"alpha", r.sampling.alpha},
          {"tau", r.match.temperature},
          {"clusters_per_label", r.clusters_per_label},
          {"learning_rate", r.train.learning_rate},
          {"epochs", r.train.epochs},
          {"batch_size", r.train.batch_size},
          {"per_epoch_checkpoints", r.per_epoch_checkpoints}};
}

inline RunConfig run_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("\"run\" must be a JSON object");
  static const char* known[] = {"method", "seed", "budget_per_class", "alpha", "tau", "clusters_per_label",
                                "learning_rate", "epochs", "batch_size", "per_epoch_checkpoints"};
  for (const auto& [key, val] : j.items())
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw InvalidArgument("unknown run config key \"" + key + "\"");
  RunConfig r;
  try {
    if (j.contains("method")) r.method = parse_method(j.at("method").get<std::string>());
    r.seed = j.value("seed", r.seed);
    r.sampling.budget_per_class = j.value("budget_per_class", r.sampling.budget_per_class);
    r.sampling.alpha = j.value("alpha", r.sampling.alpha);
    r.match.temperature = j.value("tau", r.match.temperature);
    r.clusters_per_label = j.value("clusters_per_label", r.clusters_per_label);
    r.train.learning_rate = j.value("learning_rate", r.train.learning_rate);
    r.train.epochs = j.value("epochs", r.train.epochs);
    r.train.batch_size = j.value("batch_size", r.train.batch_size);
    r.per_epoch_checkpoints = j.value("per_epoch_checkpoints", r.per_epoch_checkpoints);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed run config: ") + e.what());
  }
  return r;
}

inline json config_to_json(const CliConfig& c) { return {{"scenario", to_json(c.scenario)}, {"run", run_to_json(c.run)}}; }

inline CliConfig config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  for (const auto& [key, val] : j.items())
    if (key != "scenario" && key != "run") throw InvalidArgument("unknown config key \"" + key + "\"");
  CliConfig c;
  if (j.contains("scenario")) c.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("run")) c.run = run_from_json(j.at("run"));
  return c;
}

inline CliConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config " + path + " is not valid JSON: " + e.what());
  }
}

/// Flags that override config values when given.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget_per_class;
  std::optional<double> alpha;
  std::optional<double> tau;
  std::optional<std::size_t> clusters_per_label;
  std::size_t jobs = 1;
  std::optional<std::string> out;
};

inline CliConfig resolve_unchecked(const Overrides& o) {
  CliConfig c = o.config ? load_config(*o.config) : CliConfig{};
  if (o.method) c.run.method = parse_method(*o.method);
  if (o.seed) {
    c.scenario.seed = *o.seed;
    c.run.seed = *o.seed;
  }
  if (o.budget_per_class) c.run.sampling.budget_per_class = *o.budget_per_class;
  if (o.alpha) c.run.sampling.alpha = *o.alpha;
  if (o.tau) c.run.match.temperature = *o.tau;
  if (o.clusters_per_label) c.run.clusters_per_label = *o.clusters_per_label;
  if (c.run.sampling.alpha < 0.0) throw InvalidArgument("alpha must be non-negative");
  if (!(c.run.match.temperature > 0.0)) throw InvalidArgument("tau must be positive");
  if (c.run.clusters_per_label == 0) throw InvalidArgument("clusters-per-label must be at least 1");
  validate(c.scenario);
  return c;
}

/// Invalid values become usage errors; I/O failures stay runtime errors.
inline CliConfig resolve(const Overrides& o) {
  try {
    return resolve_unchecked(o);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

inline json metrics_record(const std::string& method, std::uint64_t seed, const MetricsReport& m) {
  return {{"method", method},
          {"seed", seed},
          {"overall", m.overall},
          {"plasticity", m.plasticity},
          {"stability", m.stability},
          {"per_context_final", m.per_context_final},
          {"bytes_uploaded", m.bytes_uploaded},
          {"bytes_downloaded", m.bytes_downloaded}};
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string summary_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %12s %12s\n", "method", "overall", "plasticity", "stability",
                "bytes_up", "bytes_down");
  os << line;
  for (const auto& [name, m] : rows) {
    std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %12zu %12zu\n", name.c_str(), fixed(m.overall).c_str(),
                  fixed(m.plasticity).c_str(), fixed(m.stability).c_str(), m.bytes_uploaded, m.bytes_downloaded);
    os << line;
  }
  return os.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << content;
}

inline std::filesystem::path prepare_out(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results are written by
/// index, so the merged output does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex m;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(m);
          if (next >= n || failure) return;
          i = next++;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(m);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---- subcommands

inline int cmd_gen(const Overrides& o, std::ostream& out) {
  const auto text = config_to_json(resolve(o)).dump(2) + "\n";
  if (o.out) {
    write_file(prepare_out(*o.out) / "config.json", text);
  } else {
    out << text;
  }
  return kOk;
}

inline int cmd_run(const Overrides& o, std::ostream& out) {
  const auto c = resolve(o);
  const auto sc = generate_scenario(c.scenario);
  const auto res = run_continual_learning(sc, c.run);
  const std::string name = method_name(c.run.method);
  const auto record = metrics_record(name, c.run.seed, res.metrics).dump() + "\n";
  const auto table = summary_table({{name, res.metrics}});
  out << record << table;
  if (o.out) {
    const auto dir = prepare_out(*o.out);
    write_file(dir / "metrics.jsonl", record);
    write_file(dir / "summary.txt", table);
    json hist = json::array();
    for (const auto& row : res.history.acc) {
      json r = json::array();
      for (double a : row) r.push_back(std::isfinite(a) ? json(a) : json(nullptr));
      hist.push_back(r);
    }
    write_file(dir / "history.json", hist.dump() + "\n");
    if (!res.transcript.frames.empty()) write_file(dir / "transcript.bin", res.transcript.concatenated());
  }
  return kOk;
}

inline int cmd_bench(const Overrides& o, std::size_t seeds, std::ostream& out) {
  if (seeds == 0) throw UsageError("--seeds must be at least 1");
  const auto base = resolve(o);
  const std::uint64_t first = o.seed ? *o.seed : 1;
  const Method methods[] = {Method::delta, Method::random, Method::vanilla};
  std::vector<MetricsReport> results(3 * seeds);
  parallel_for(results.size(), o.jobs, [&](std::size_t i) {
    const std::uint64_t s = first + i % seeds;
    CliConfig c = base;
    c.scenario.seed = s;
    c.run.seed = s;
    c.run.method = methods[i / seeds];
    results[i] = run_continual_learning(generate_scenario(c.scenario), c.run).metrics;
  });

  std::string records;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (std::size_t m = 0; m < 3; ++m) {
    MetricsReport mean;
    for (std::size_t k = 0; k < seeds; ++k) {
      const auto& r = results[m * seeds + k];
      records += metrics_record(method_name(methods[m]), first + k, r).dump() + "\n";
      mean.overall += r.overall / static_cast<double>(seeds);
      mean.plasticity += r.plasticity / static_cast<double>(seeds);
      mean.stability += r.stability / static_cast<double>(seeds);
      mean.bytes_uploaded += r.bytes_uploaded;
      mean.bytes_downloaded += r.bytes_downloaded;
    }
    mean.bytes_uploaded /= seeds;
    mean.bytes_downloaded /= seeds;
    rows.emplace_back(method_name(methods[m]), mean);
  }
  const auto table = summary_table(rows);
  out << records << table;
  if (o.out) {
    const auto dir = prepare_out(*o.out);
    write_file(dir / "bench.jsonl", records);
    write_file(dir / "summary.txt", table);
  }
  return kOk;
}

struct OracleParams {
  std::size_t instances = 20;
  std::size_t clusters = 4;
  std::size_t members = 6;
  std::size_t budget = 8;
  std::size_t dim = 3;
};

/// A random instance with one cluster per label, 1..members members each.
struct OracleInstance {
  Dataset cloud;
  DirectoryBuild build;
  ContextWeights weights;
  std::size_t budget = 0;
};

inline OracleInstance random_oracle_instance(const OracleParams& p, std::uint64_t seed) {
  detail::require(p.clusters >= 1 && p.members >= 1 && p.budget >= 1 && p.dim >= 1, "oracle parameters must be positive");
  Rng rng = make_rng(seed);
  OracleInstance inst;
  const std::size_t k = 1 + rng() % p.clusters;
  for (Label c = 0; c < k; ++c) {
    const auto centre = normal_vector(rng, p.dim, 3.0);
    const double spread = 0.2 + 2.0 * uniform01(rng);
    const std::size_t n = 1 + rng() % p.members;
    for (std::size_t i = 0; i < n; ++i) {
      auto x = normal_vector(rng, p.dim, spread);
      linalg::axpy(1.0, centre, x);
      inst.cloud.samples.push_back({std::move(x), c});
    }
  }
  inst.build = build_directory(inst.cloud, 1, derive_seed(seed, 1));
  for (ClusterId c = 0; c < k; ++c) inst.weights.weights.emplace(c, 0.05 + uniform01(rng));
  inst.budget = std::max<std::size_t>(k, 1 + rng() % p.budget);
  inst.budget = std::min(inst.budget, p.budget);
  return inst;
}

inline int cmd_oracle(const Overrides& o, const OracleParams& p, std::ostream& out) {
  if (p.budget > kOracleMaxBudget || p.members > kOracleMaxClusterSize || p.clusters > kOracleMaxClusters)
    throw UsageError("oracle instances are limited to " + std::to_string(kOracleMaxClusters) + " clusters, " +
                          std::to_string(kOracleMaxClusterSize) + " members and budget " +
                          std::to_string(kOracleMaxBudget));
  const std::uint64_t seed = o.seed ? *o.seed : 1;
  std::vector<OracleResult> results(p.instances);
  parallel_for(p.instances, o.jobs, [&](std::size_t i) {
    const auto inst = random_oracle_instance(p, derive_seed(seed, i));
    results[i] = oracle_optimal_plan(inst.weights, inst.build.directory, inst.build.assignment, inst.cloud, inst.budget);
  });
  std::string records;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    records += json{{"instance", i},
                    {"best_value", r.best_value},
                    {"analytical_value", r.analytical_value},
                    {"gap", r.gap},
                    {"relative_gap", r.relative_gap()}}
                   .dump() +
               "\n";
    worst = std::max(worst, r.relative_gap());
  }
  const std::string summary = "instances " + std::to_string(results.size()) + "  worst relative gap " +
                              fixed(results.empty() ? 0.0 : worst, 6) + "\n";
  out << records << summary;
  if (o.out) {
    const auto dir = prepare_out(*o.out);
    write_file(dir / "oracle.jsonl", records);
    write_file(dir / "summary.txt", summary);
  }
  return kOk;
}

inline json describe(const protocol::Message& m, std::size_t bytes) {
  json j{{"type", protocol::type_name(m)}, {"bytes", bytes}};
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, protocol::DirectoryDownload>) {
          j["version"] = msg.version;
          j["entries"] = msg.directory.size();
          j["feature_dim"] = msg.directory.feature_dim;
        } else if constexpr (std::is_same_v<T, protocol::WeightUpload>) {
          j["device_id"] = msg.device_id;
          j["context_id"] = msg.context_id;
          json ctx = json::array();
          for (const auto& w : msg.contexts) ctx.push_back(io::weights_record(w));
          j["contexts"] = ctx;
        } else if constexpr (std::is_same_v<T, protocol::EnrichmentResponse>) {
          j["context_id"] = msg.batch.context_id;
          j["samples"] = msg.batch.size();
          std::map<ClusterId, std::size_t> per_cluster;
          for (const auto& p : msg.batch.provenance) ++per_cluster[p.cluster_id];
          json pc = json::object();
          for (const auto& [id, n] : per_cluster) pc[std::to_string(id)] = n;
          j["per_cluster"] = pc;
        } else {
          j["code"] = msg.code;
          j["detail"] = msg.detail;
        }
      },
      m);
  return j;
}

inline int cmd_inspect(const std::string& path, std::ostream& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open transcript " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t at = 0;
  while (at < bytes.size()) {
    if (bytes.size() - at < protocol::kFrameHeaderBytes) throw DecodeError(at, "truncated frame header");
    const std::size_t len = protocol::detail::get_u32(bytes, at);
    const std::size_t frame = protocol::kFrameHeaderBytes + len;
    if (bytes.size() - at < frame) throw DecodeError(at, "truncated frame");
    const auto msg = protocol::decode(std::string_view(bytes).substr(at, frame));
    out << describe(msg, frame).dump() << "\n";
    at += frame;
  }
  return kOk;
}

inline void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config file (scenario and run settings)");
  sub->add_option("--method", o.method, "delta, random or vanilla")
      ->check(CLI::IsMember({"delta", "random", "vanilla"}));
  sub->add_option("--seed", o.seed, "seed for the scenario and the run");
  sub->add_option("--budget-per-class", o.budget_per_class, "enrichment samples per class");
  sub->add_option("--alpha", o.alpha, "past-context trade-off");
  sub->add_option("--tau", o.tau, "soft-matching temperature");
  sub->add_option("--clusters-per-label", o.clusters_per_label, "k-means clusters per label");
  sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", o.out, "output directory");
}

/// Entry point. Returns 0 on success, 1 on usage errors and 2 on runtime errors.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cloud-assisted data enrichment for on-device continual learning", "delta"};
  app.require_subcommand(1);
  Overrides o;
  std::size_t seeds = 5;
  OracleParams op;
  std::string transcript;

  auto* gen = app.add_subcommand("gen", "emit a config template");
  add_common(gen, o);
  auto* run = app.add_subcommand("run", "run one method on one scenario");
  add_common(run, o);
  auto* bench = app.add_subcommand("bench", "compare delta, random and vanilla over seeds");
  add_common(bench, o);
  bench->add_option("--seeds", seeds, "number of consecutive seeds");
  auto* oracle = app.add_subcommand("oracle", "check sampling plans against brute-force enumeration");
  add_common(oracle, o);
  oracle->add_option("--instances", op.instances, "number of random instances");
  oracle->add_option("--clusters", op.clusters, "maximum clusters per instance");
  oracle->add_option("--members", op.members, "maximum members per cluster");
  oracle->add_option("--budget", op.budget, "maximum budget");
  auto* inspect = app.add_subcommand("inspect", "decode a protocol transcript");
  inspect->add_option("transcript", transcript, "transcript file written by run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(o, out);
    if (run->parsed()) return cmd_run(o, out);
    if (bench->parsed()) return cmd_bench(o, seeds, out);
    if (oracle->parsed()) return cmd_oracle(o, op, out);
    if (inspect->parsed()) return cmd_inspect(transcript, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace delta::cli
