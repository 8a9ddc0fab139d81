/* Copyright 2026 The ProxForge Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

/// \file bench_store.hpp
/// Ground-truth store of architectures and their measured accuracies, stored
/// as JSON lines (one record per line):
///
///   {"index":0,"space":"autoformer","arch":{...},
///    "metrics":{"cifar100":{"dis_acc":81.2,"vanilla_acc":74.0}}}
///
/// cifar100, flowers and chaoyang carry dis_acc and/or vanilla_acc; imagenet
/// carries subnet_acc only and exists for the autoformer space only. Two
/// optional keys extend the format: "provenance" ("real-import" or
/// "synthetic") and "capture" (the seed, scale, mode and batch that reproduce
/// the record's statistics).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "proxforge/arch.hpp"
#include "proxforge/archive.hpp"
#include "proxforge/error.hpp"
#include "proxforge/proxies.hpp"
#include "proxforge/rng.hpp"
#include "proxforge/statistics.hpp"
#include "proxforge/vit_sim.hpp"

namespace proxforge {

inline constexpr std::array<std::string_view, 4> kKnownDatasets{"cifar100", "flowers", "chaoyang", "imagenet"};

inline bool is_known_dataset(std::string_view id) noexcept {
  return std::find(kKnownDatasets.begin(), kKnownDatasets.end(), id) != kKnownDatasets.end();
}

/// Accuracies in percent. Which fields may be present depends on the dataset.
struct Accuracy {
  std::optional<double> dis_acc, vanilla_acc, subnet_acc;

  friend bool operator==(const Accuracy&, const Accuracy&) = default;
};

/// Everything needed to recompute a record's statistics bit for bit.
struct CaptureInfo {
  std::uint64_t seed = 0;
  int scale = 1;
  CaptureMode mode = CaptureMode::kStandard;
  BatchSpec batch;

  friend bool operator==(const CaptureInfo&, const CaptureInfo&) = default;
};

struct BenchRecord {
  int index = 0;
  ArchConfig arch;
  std::map<std::string, Accuracy> metrics;
  std::optional<CaptureInfo> capture;

  friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

enum class Provenance { kRealImport, kSynthetic };

inline std::string_view provenance_name(Provenance p) noexcept {
  return p == Provenance::kSynthetic ? "synthetic" : "real-import";
}

struct BenchStore {
  Space space = Space::kAutoFormer;
  Provenance provenance = Provenance::kRealImport;
  std::vector<BenchRecord> records;  // records[i].index == i

  std::size_t size() const noexcept { return records.size(); }

  /// Datasets present in at least one record, sorted.
  std::vector<std::string> datasets() const {
    std::vector<std::string> out;
    for (const auto& r : records)
      for (const auto& [id, acc] : r.metrics)
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const BenchStore&, const BenchStore&) = default;
};

// ---------------------------------------------------------------------------
// Record validation and JSON

namespace detail {

inline void check_accuracy(const std::optional<double>& v, const std::string& where) {
  if (v && !(std::isfinite(*v) && *v >= 0.0 && *v <= 100.0))
    throw SchemaError(where + " = " + std::to_string(*v) + " is outside [0, 100]");
}

}  // namespace detail

/// Throws SchemaError on any record invariant violation.
inline void validate_record(const BenchRecord& r) {
  validate_arch(r.arch);
  if (r.index < 0) throw SchemaError("negative index " + std::to_string(r.index));
  for (const auto& [id, acc] : r.metrics) {
    if (!is_known_dataset(id)) throw SchemaError("unknown dataset '" + id + "'");
    const std::string where = "metrics." + id;
    detail::check_accuracy(acc.dis_acc, where + ".dis_acc");
    detail::check_accuracy(acc.vanilla_acc, where + ".vanilla_acc");
    detail::check_accuracy(acc.subnet_acc, where + ".subnet_acc");
    if (id == "imagenet") {
      if (r.arch.space != Space::kAutoFormer) throw SchemaError("imagenet metrics exist for the autoformer space only");
      if (acc.dis_acc || acc.vanilla_acc) throw SchemaError(where + " carries only subnet_acc");
      if (!acc.subnet_acc) throw SchemaError(where + " lacks subnet_acc");
    } else {
      if (acc.subnet_acc) throw SchemaError(where + " cannot carry subnet_acc");
      if (!acc.dis_acc && !acc.vanilla_acc) throw SchemaError(where + " carries no accuracy");
    }
  }
  if (r.capture && r.capture->scale < 1) throw SchemaError("capture.scale must be positive");
}

inline nlohmann::ordered_json record_to_json(const BenchRecord& r, Provenance provenance) {
  nlohmann::ordered_json j;
  j["index"] = r.index;
  j["space"] = std::string(space_name(r.arch.space));
  j["arch"] = arch_to_json(r.arch);
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [id, acc] : r.metrics) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    if (acc.dis_acc) m["dis_acc"] = *acc.dis_acc;
    if (acc.vanilla_acc) m["vanilla_acc"] = *acc.vanilla_acc;
    if (acc.subnet_acc) m["subnet_acc"] = *acc.subnet_acc;
    metrics[id] = std::move(m);
  }
  j["metrics"] = std::move(metrics);
  if (provenance != Provenance::kRealImport) j["provenance"] = std::string(provenance_name(provenance));
  if (r.capture) {
    nlohmann::ordered_json c;
    c["seed"] = r.capture->seed;
    c["scale"] = r.capture->scale;
    c["mode"] = std::string(capture_mode_name(r.capture->mode));
    c["batch"] = batch_to_json(r.capture->batch);
    j["capture"] = std::move(c);
  }
  return j;
}

namespace detail {

struct ParsedRecord {
  BenchRecord record;
  Space space;
  Provenance provenance;
};

inline ParsedRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  for (const auto& [key, v] : j.items())
    if (key != "index" && key != "space" && key != "arch" && key != "metrics" && key != "provenance" &&
        key != "capture")
      throw SchemaError("unknown key '" + key + "'");
  ParsedRecord out;
  try {
    if (!j.at("index").is_number_integer()) throw SchemaError("index must be an integer");
    out.record.index = j.at("index").get<int>();
    out.space = parse_space(j.at("space").get<std::string>());
    out.record.arch = arch_from_json(out.space, j.at("arch"));
    const auto& metrics = j.at("metrics");
    if (!metrics.is_object()) throw SchemaError("metrics must be an object");
    for (const auto& [id, m] : metrics.items()) {
      if (!m.is_object()) throw SchemaError("metrics." + id + " must be an object");
      Accuracy acc;
      for (const auto& [key, v] : m.items()) {
        if (!v.is_number()) throw SchemaError("metrics." + id + "." + key + " must be a number");
        if (key == "dis_acc") acc.dis_acc = v.get<double>();
        else if (key == "vanilla_acc") acc.vanilla_acc = v.get<double>();
        else if (key == "subnet_acc") acc.subnet_acc = v.get<double>();
        else throw SchemaError("unknown metric '" + key + "' for " + id);
      }
      out.record.metrics[id] = acc;
    }
    out.provenance = Provenance::kRealImport;
    if (j.contains("provenance")) {
      const auto p = j.at("provenance").get<std::string>();
      if (p == "synthetic") out.provenance = Provenance::kSynthetic;
      else if (p != "real-import") throw SchemaError("unknown provenance '" + p + "'");
    }
    if (j.contains("capture")) {
      const auto& c = j.at("capture");
      CaptureInfo info;
      info.seed = c.at("seed").get<std::uint64_t>();
      info.scale = c.at("scale").get<int>();
      info.mode = parse_capture_mode(c.at("mode").get<std::string>());
      info.batch = batch_from_json(c.at("batch"));
      out.record.capture = info;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(e.what());
  }
  validate_record(out.record);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Load / save

/// Parses JSON-lines text. Blank lines are skipped. Malformed JSON is a
/// ParseError and invariant violations are SchemaErrors; both name the
/// 1-based line.
inline BenchStore parse_store(std::istream& in) {
  BenchStore store;
  std::map<int, std::size_t> first_line;
  std::optional<Space> space;
  std::optional<Provenance> provenance;
  std::string line;
  std::size_t lineno = 0;
  std::vector<BenchRecord> records;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto at = "line " + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(at + e.what(), lineno, true);
    }
    detail::ParsedRecord parsed;
    try {
      parsed = detail::record_from_json(j);
    } catch (const SchemaError& e) {
      throw SchemaError(at + e.what());
    }
    if (space && *space != parsed.space)
      throw SchemaError(at + "space '" + std::string(space_name(parsed.space)) + "' differs from '" +
                        std::string(space_name(*space)) + "'");
    if (provenance && *provenance != parsed.provenance) throw SchemaError(at + "mixed provenance");
    space = parsed.space;
    provenance = parsed.provenance;
    const int idx = parsed.record.index;
    if (const auto it = first_line.find(idx); it != first_line.end())
      throw SchemaError(at + "duplicate index " + std::to_string(idx) + " (first seen on line " +
                        std::to_string(it->second) + ")");
    first_line[idx] = lineno;
    records.push_back(std::move(parsed.record));
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].index != static_cast<int>(i))
      throw SchemaError("line " + std::to_string(first_line[records[i].index]) + ": indices are not dense; index " +
                        std::to_string(i) + " is missing");
  store.space = space.value_or(Space::kAutoFormer);
  store.provenance = provenance.value_or(Provenance::kRealImport);
  store.records = std::move(records);
  return store;
}

inline BenchStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_store(in);
}

inline void write_store(std::ostream& out, const BenchStore& store) {
  for (const auto& r : store.records) out << record_to_json(r, store.provenance).dump() << '\n';
}

inline void save_store(const BenchStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_store(out, store);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Queries

inline std::size_t random_index(const BenchStore& store, Rng& rng) {
  if (store.records.empty()) throw IndexOutOfRange("store is empty");
  return uniform_index(rng, store.size());
}

inline const BenchRecord& record_at(const BenchStore& store, std::size_t idx) {
  if (idx >= store.size())
    throw IndexOutOfRange("index " + std::to_string(idx) + " not in [0, " + std::to_string(store.size()) + ")");
  return store.records[idx];
}

inline const ArchConfig& arch_by_idx(const BenchStore& store, std::size_t idx) { return record_at(store, idx).arch; }

/// Distillation accuracy when `distill`, vanilla accuracy otherwise. For
/// imagenet only the non-distilled subnet accuracy exists.
inline double acc_by_idx(const BenchStore& store, std::size_t idx, const std::string& dataset, bool distill) {
  const auto& r = record_at(store, idx);
  const auto it = r.metrics.find(dataset);
  const auto where = "record " + std::to_string(idx) + ", " + dataset;
  if (it == r.metrics.end()) throw MetricUnavailable(where + ": no metrics");
  const Accuracy& a = it->second;
  if (dataset == "imagenet") {
    if (distill) throw MetricUnavailable(where + ": only subnet accuracy is provided");
    return a.subnet_acc.value();
  }
  const auto& v = distill ? a.dis_acc : a.vanilla_acc;
  if (!v) throw MetricUnavailable(where + (distill ? ": no dis_acc" : ": no vanilla_acc"));
  return *v;
}

inline bool has_metric(const BenchRecord& r, const std::string& dataset, bool distill) {
  const auto it = r.metrics.find(dataset);
  if (it == r.metrics.end()) return false;
  if (dataset == "imagenet") return !distill && it->second.subnet_acc.has_value();
  return distill ? it->second.dis_acc.has_value() : it->second.vanilla_acc.has_value();
}

struct Split {
  std::vector<std::size_t> val, test;  // each ascending
};

/// Seeded partition into a validation part of round(val_fraction * N)
/// records and a test part holding the rest.
inline Split split(const BenchStore& store, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in (0, 1)");
  const std::size_t n = store.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(seed, {0x5d1});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------------------
// Statistics for records

inline NetworkStatistics capture(const ArchConfig& arch, const CaptureInfo& info) {
  return info.mode == CaptureMode::kSynflow ? sim::capture_synflow(arch, info.scale, info.seed, info.batch)
                                            : sim::capture_statistics(arch, info.scale, info.batch, info.seed);
}

/// Capture settings for a record: its stored ones, else defaults derived from
/// `seed` and the record index.
inline CaptureInfo capture_info_for(const BenchRecord& r, std::uint64_t seed, CaptureMode mode,
                                    std::optional<int> scale = std::nullopt) {
  if (r.capture && r.capture->mode == mode) return *r.capture;
  CaptureInfo info;
  info.seed = derive_seed(seed, {0xca9, static_cast<std::uint64_t>(r.index)});
  info.scale = scale.value_or(default_scale(r.arch.space));
  info.mode = mode;
  return info;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

enum class Link { kIdentity, kLogistic };

inline std::string_view link_name(Link l) noexcept { return l == Link::kLogistic ? "logistic" : "identity"; }

inline Link parse_link(std::string_view s) {
  if (s == "identity") return Link::kIdentity;
  if (s == "logistic") return Link::kLogistic;
  throw ConfigError("unknown link '" + std::string(s) + "' (expected identity or logistic)");
}

struct SyntheticSpec {
  Proxy planted{autoprox_a_graph()};
  Link link = Link::kIdentity;
  double noise_std = 0.0;  // in units of the standardized planted score
  std::size_t count = 500;
  std::uint64_t seed = 0;
  Space space = Space::kAutoFormer;
  std::vector<std::string> datasets{"cifar100", "flowers", "chaoyang"};
  std::optional<int> scale;  // default_scale(space) when unset
  BatchSpec batch;
  double acc_min = 20.0, acc_max = 90.0;
  int max_attempts = 100;  // per record, before giving up on a valid planted score
};

/// Returns the statistics for (arch, capture settings). The default provider
/// runs the simulator.
using StatsProvider = std::function<NetworkStatistics(const ArchConfig&, const CaptureInfo&)>;

inline StatsProvider simulator_provider() { return [](const ArchConfig& a, const CaptureInfo& c) { return capture(a, c); }; }

namespace detail {

inline std::vector<double> standardized(std::vector<double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  if (!(sd > 0.0) || !std::isfinite(sd)) throw DegenerateInput("planted scores are constant");
  for (double& x : v) x = (x - mean) / sd;
  return v;
}

}  // namespace detail

/// Planted scores of every record, in index order. Captures run in parallel.
inline std::vector<double> planted_scores(const BenchStore& store, const Proxy& proxy, std::uint64_t seed,
                                          std::size_t jobs = 1, const StatsProvider& provider = simulator_provider()) {
  const CaptureMode mode = proxy.needs_synflow() ? CaptureMode::kSynflow : CaptureMode::kStandard;
  std::vector<double> out(store.size());
  parallel_for(store.size(), jobs, [&](std::size_t i) {
    const auto& r = store.records[i];
    const auto s = score(proxy, provider(r.arch, capture_info_for(r, seed, mode)));
    if (!check_validity(s))
      throw DegenerateInput("record " + std::to_string(i) + " has an invalid planted score");
    out[i] = s.value();
  });
  return out;
}

/// Samples `count` architectures, captures statistics, and derives every
/// accuracy from the planted score:
///   z = standardize(link(standardize(score))) + Normal(0, noise_std)
///   acc = affine map of z onto [acc_min, acc_max]
/// Each (dataset, metric) pair draws its own noise stream. Architectures
/// whose planted score is invalid are redrawn.
inline BenchStore generate_synthetic(const SyntheticSpec& spec, std::size_t jobs = 1,
                                     const StatsProvider& provider = simulator_provider()) {
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) throw ConfigError("noise std must be >= 0");
  if (spec.count < 2) throw ConfigError("a synthetic store needs at least two records");
  if (!(spec.acc_min >= 0.0 && spec.acc_max <= 100.0 && spec.acc_min < spec.acc_max))
    throw ConfigError("accuracy range must satisfy 0 <= min < max <= 100");
  if (spec.datasets.empty()) throw ConfigError("no datasets requested");
  for (const auto& d : spec.datasets) {
    if (!is_known_dataset(d)) throw ConfigError("unknown dataset '" + d + "'");
    if (d == "imagenet" && spec.space != Space::kAutoFormer)
      throw ConfigError("imagenet metrics exist for the autoformer space only");
  }
  const CaptureMode mode = spec.planted.needs_synflow() ? CaptureMode::kSynflow : CaptureMode::kStandard;
  const int scale = spec.scale.value_or(default_scale(spec.space));

  BenchStore store;
  store.space = spec.space;
  store.provenance = Provenance::kSynthetic;
  store.records.resize(spec.count);
  std::vector<double> raw(spec.count);
  parallel_for(spec.count, jobs, [&](std::size_t i) {
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
      const auto a = static_cast<std::uint64_t>(attempt);
      Rng rng = make_rng(spec.seed, {0xa5c, i, a});
      BenchRecord r;
      r.index = static_cast<int>(i);
      r.arch = sample_arch(spec.space, rng);
      CaptureInfo info;
      info.seed = derive_seed(spec.seed, {0xca9, i, a});
      info.scale = scale;
      info.mode = mode;
      info.batch = spec.batch;
      const auto s = score(spec.planted, provider(r.arch, info));
      if (!check_validity(s)) continue;
      r.capture = info;
      raw[i] = s.value();
      store.records[i] = std::move(r);
      return;
    }
    throw ExhaustedSampling("no architecture with a valid planted score for record " + std::to_string(i) +
                            " after " + std::to_string(spec.max_attempts) + " attempts");
  });

  std::vector<double> z = detail::standardized(raw);
  if (spec.link == Link::kLogistic)
    for (double& x : z) x = 1.0 / (1.0 + std::exp(-x));
  z = detail::standardized(std::move(z));

  auto make_metric = [&](std::uint64_t dataset_tag, std::uint64_t metric_tag) {
    Rng rng = make_rng(spec.seed, {0x401, dataset_tag, metric_tag});
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> y(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) y[i] = z[i] + spec.noise_std * noise(rng);
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double a = *lo, b = *hi;
    if (!(b > a)) throw DegenerateInput("generated accuracies are constant");
    for (double& v : y) v = std::clamp(spec.acc_min + (v - a) / (b - a) * (spec.acc_max - spec.acc_min), 0.0, 100.0);
    return y;
  };
  for (const auto& d : spec.datasets) {
    const auto tag = static_cast<std::uint64_t>(
        std::find(kKnownDatasets.begin(), kKnownDatasets.end(), d) - kKnownDatasets.begin());
    if (d == "imagenet") {
      const auto sub = make_metric(tag, 2);
      for (std::size_t i = 0; i < spec.count; ++i) store.records[i].metrics[d].subnet_acc = sub[i];
    } else {
      const auto dis = make_metric(tag, 0);
      const auto van = make_metric(tag, 1);
      for (std::size_t i = 0; i < spec.count; ++i) {
        store.records[i].metrics[d].dis_acc = dis[i];
        store.records[i].metrics[d].vanilla_acc = van[i];
      }
    }
  }
  return store;
}

}  // namespace proxforge
