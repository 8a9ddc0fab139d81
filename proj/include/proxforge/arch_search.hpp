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

/// \file arch_search.hpp
/// Training-free architecture search: sample configurations inside a
/// parameter budget, score each with a proxy, return the argmax.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "proxforge/arch.hpp"
#include "proxforge/bench_store.hpp"
#include "proxforge/error.hpp"
#include "proxforge/proxies.hpp"
#include "proxforge/rng.hpp"

namespace proxforge {

struct SearchOptions {
  Space space = Space::kAutoFormer;
  std::size_t n = 400;
  std::int64_t min_params = 4'000'000;
  std::int64_t max_params = 9'000'000;
  std::optional<int> scale;  // default_scale(space) when unset
  BatchSpec batch;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t attempts_per_candidate = 100;
};

struct Candidate {
  std::size_t index = 0;
  ArchConfig arch;
  std::int64_t params = 0;
  CaptureInfo capture;
  ProxyScore score = ProxyScore::invalid(InvalidReason::kNaN);

  bool valid() const noexcept { return check_validity(score); }
};

struct SearchReport {
  std::string proxy;  // builtin name or canonical graph text
  Space space = Space::kAutoFormer;
  std::uint64_t seed = 0;
  std::int64_t min_params = 0, max_params = 0;
  int scale = 1;
  std::size_t attempts = 0;  // configurations drawn, including rejected ones
  std::vector<Candidate> candidates;
  std::size_t best = 0;       // position in candidates
  double wall_seconds = 0.0;  // diagnostic; not serialized

  const Candidate& best_candidate() const { return candidates.at(best); }
};

/// Rejection-samples `n` configurations whose full-scale parameter count is
/// in [min_params, max_params]. Gives up with ExhaustedSampling after
/// attempts_per_candidate * n draws.
inline std::vector<ArchConfig> sample_in_range(const SearchOptions& opt, std::size_t* attempts = nullptr) {
  if (opt.n < 1) throw ConfigError("candidate count must be at least 1");
  if (opt.min_params > opt.max_params) throw ConfigError("parameter range is not ordered");
  Rng rng = make_rng(opt.seed, {0x5ea});
  std::vector<ArchConfig> out;
  const std::size_t budget = opt.attempts_per_candidate * opt.n;
  std::size_t drawn = 0;
  while (out.size() < opt.n) {
    if (drawn == budget)
      throw ExhaustedSampling("only " + std::to_string(out.size()) + " of " + std::to_string(opt.n) +
                              " configurations fell in [" + std::to_string(opt.min_params) + ", " +
                              std::to_string(opt.max_params) + "] after " + std::to_string(budget) + " draws");
    ++drawn;
    auto cfg = sample_arch(opt.space, rng);
    const auto p = param_count(cfg);
    if (p >= opt.min_params && p <= opt.max_params) out.push_back(std::move(cfg));
  }
  if (attempts) *attempts = drawn;
  return out;
}

/// Index of the highest valid score, lowest index on ties. AllInvalid if no
/// candidate scored validly.
inline std::size_t select_best(const std::vector<Candidate>& cands) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].valid() && (!best || cands[i].score.value() > cands[*best].score.value())) best = i;
  if (!best) throw AllInvalid("no candidate received a valid score");
  return *best;
}

/// Scores prepared candidates (arch and capture filled in) in parallel and
/// selects the best.
inline SearchReport score_candidates(const Proxy& proxy, std::vector<Candidate> cands, std::size_t jobs,
                                     const StatsProvider& provider = simulator_provider()) {
  const auto start = std::chrono::steady_clock::now();
  parallel_for(cands.size(), jobs, [&](std::size_t i) {
    auto& c = cands[i];
    c.score = score(proxy, provider(c.arch, c.capture));
  });
  SearchReport rep;
  rep.proxy = proxy.name();
  rep.candidates = std::move(cands);
  rep.best = select_best(rep.candidates);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

inline SearchReport search(const Proxy& proxy, const SearchOptions& opt,
                           const StatsProvider& provider = simulator_provider()) {
  const auto start = std::chrono::steady_clock::now();
  std::size_t attempts = 0;
  auto configs = sample_in_range(opt, &attempts);
  const int scale = opt.scale.value_or(default_scale(opt.space));
  const CaptureMode mode = proxy.needs_synflow() ? CaptureMode::kSynflow : CaptureMode::kStandard;
  std::vector<Candidate> cands(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto& c = cands[i];
    c.index = i;
    c.params = param_count(configs[i]);
    c.arch = std::move(configs[i]);
    c.capture.seed = derive_seed(opt.seed, {0xc0, i});
    c.capture.scale = scale;
    c.capture.mode = mode;
    c.capture.batch = opt.batch;
  }
  SearchReport rep = score_candidates(proxy, std::move(cands), opt.jobs, provider);
  rep.space = opt.space;
  rep.seed = opt.seed;
  rep.min_params = opt.min_params;
  rep.max_params = opt.max_params;
  rep.scale = scale;
  rep.attempts = attempts;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Searches over a store's own architectures, reusing each record's capture
/// settings. Used to check selection against the stored accuracies.
inline SearchReport search_store(const Proxy& proxy, const BenchStore& store, std::uint64_t seed, std::size_t jobs = 1,
                                 const StatsProvider& provider = simulator_provider()) {
  const CaptureMode mode = proxy.needs_synflow() ? CaptureMode::kSynflow : CaptureMode::kStandard;
  std::vector<Candidate> cands(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& r = store.records[i];
    cands[i].index = i;
    cands[i].arch = r.arch;
    cands[i].params = param_count(r.arch);
    cands[i].capture = capture_info_for(r, seed, mode);
  }
  SearchReport rep = score_candidates(proxy, std::move(cands), jobs, provider);
  rep.space = store.space;
  rep.seed = seed;
  rep.attempts = store.size();
  if (!store.records.empty()) rep.scale = rep.candidates.front().capture.scale;
  return rep;
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline nlohmann::ordered_json score_json(const ProxyScore& s) {
  return check_validity(s) ? nlohmann::ordered_json(s.value()) : nlohmann::ordered_json(nullptr);
}

inline std::string score_text(const ProxyScore& s) {
  if (!check_validity(s)) return "invalid";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", s.value());
  return buf;
}

inline std::string invalid_why(const ProxyScore& s) {
  if (s.is_invalid()) return std::string(invalid_reason_name(s.reason()));
  return "degenerate-constant";
}

}  // namespace detail

/// Deterministic JSON report. Wall time is left out so equal seeds give
/// byte-identical files.
inline nlohmann::ordered_json report_to_json(const SearchReport& rep) {
  nlohmann::ordered_json j;
  j["proxy"] = rep.proxy;
  j["space"] = std::string(space_name(rep.space));
  j["seed"] = rep.seed;
  j["param_range"] = {rep.min_params, rep.max_params};
  j["scale"] = rep.scale;
  j["attempts"] = rep.attempts;
  const auto& b = rep.best_candidate();
  nlohmann::ordered_json best;
  best["index"] = b.index;
  best["score"] = b.score.value();
  best["params"] = b.params;
  best["arch"] = arch_to_json(b.arch);
  j["best"] = std::move(best);
  auto arr = nlohmann::ordered_json::array();
  for (const auto& c : rep.candidates) {
    nlohmann::ordered_json e;
    e["index"] = c.index;
    e["params"] = c.params;
    e["score"] = detail::score_json(c.score);
    if (!c.valid()) e["invalid"] = detail::invalid_why(c.score);
    e["capture_seed"] = c.capture.seed;
    e["arch"] = arch_to_json(c.arch);
    arr.push_back(std::move(e));
  }
  j["candidates"] = std::move(arr);
  return j;
}

/// index,params,score
inline void write_report_csv(std::ostream& os, const SearchReport& rep) {
  os << "index,params,score\n";
  for (const auto& c : rep.candidates) os << c.index << ',' << c.params << ',' << detail::score_text(c.score) << '\n';
}

/// Score-versus-size scatter data: params,score,selected
inline void write_plot_csv(std::ostream& os, const SearchReport& rep) {
  os << "params,score,selected\n";
  for (std::size_t i = 0; i < rep.candidates.size(); ++i) {
    const auto& c = rep.candidates[i];
    if (!c.valid()) continue;
    os << c.params << ',' << detail::score_text(c.score) << ',' << (i == rep.best ? 1 : 0) << '\n';
  }
}

}  // namespace proxforge
