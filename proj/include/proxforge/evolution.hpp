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

/// \file evolution.hpp
/// Population search over proxy graphs with rank-correlation fitness.
///
/// Each iteration samples a pool from the population, takes its top-k,
/// picks a parent uniformly among them and mutates it. The elitist rule
/// admits a mutant only if it beats the parent by the margin; after
/// `retry_cap` failed attempts the best valid mutant is admitted if it
/// strictly improves on the parent, otherwise the iteration is skipped.
/// After an insertion the lowest-fitness member is removed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "proxforge/bench_store.hpp"
#include "proxforge/error.hpp"
#include "proxforge/metrics.hpp"
#include "proxforge/proxy_graph.hpp"
#include "proxforge/rng.hpp"

namespace proxforge {

enum class Strategy { kElitism, kNaive, kRandom };

inline std::string_view strategy_name(Strategy s) noexcept {
  switch (s) {
    case Strategy::kElitism: return "elitism";
    case Strategy::kNaive: return "naive";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "elitism") return Strategy::kElitism;
  if (s == "naive") return Strategy::kNaive;
  if (s == "random") return Strategy::kRandom;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected elitism, naive or random)");
}

struct EvolutionSettings {
  std::size_t population = 20;
  std::size_t iterations = 200;
  double sample_ratio = 0.5;  // pool size = round(sample_ratio * population)
  std::size_t topk = 5;
  double mutation_prob = 0.5;
  double margin = 0.1;
  std::size_t retry_cap = 32;
  std::size_t subset_size = 100;  // fitness records per dataset
  std::vector<double> alphas;     // dataset weights; empty means all 1
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t init_attempts_per_member = 1000;
  // Stop once the best JCM reaches this value. The trace up to that point is
  // identical to a full run, so iterations-to-threshold is unaffected.
  std::optional<double> stop_at;

  std::size_t pool_size() const noexcept {
    return static_cast<std::size_t>(std::llround(sample_ratio * static_cast<double>(population)));
  }

  /// Throws ConfigError unless 1 <= k <= |R| <= P, m >= 0 (or -inf for
  /// the naive rule), retry cap >= 1 and 0 <= p <= 1.
  void validate() const {
    if (population < 1) throw ConfigError("population must be at least 1");
    if (!(sample_ratio > 0.0 && sample_ratio <= 1.0)) throw ConfigError("sample ratio must lie in (0, 1]");
    const auto pool = pool_size();
    if (!(topk >= 1 && topk <= pool && pool <= population))
      throw ConfigError("need 1 <= topk <= pool size <= population (topk " + std::to_string(topk) + ", pool " +
                        std::to_string(pool) + ", population " + std::to_string(population) + ")");
    if (std::isnan(margin) || margin < 0.0) {
      if (!(std::isinf(margin) && margin < 0.0)) throw ConfigError("margin must be >= 0");
    }
    if (retry_cap < 1) throw ConfigError("retry cap must be at least 1");
    if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw ConfigError("mutation probability must lie in [0, 1]");
    if (subset_size < 2) throw ConfigError("fitness subsets need at least two records");
    for (double a : alphas)
      if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("dataset weights must be finite and >= 0");
    if (init_attempts_per_member < 1) throw ConfigError("init attempts must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Fitness

struct DatasetSlice {
  std::string id;
  std::vector<std::size_t> records;   // store indices, ascending
  std::vector<std::size_t> networks;  // positions in FitnessContext::networks
  std::vector<double> accuracies;
};

/// Frozen data every candidate is scored on: per-dataset record subsets,
/// their accuracies, and the statistics of every distinct record involved.
struct FitnessContext {
  std::vector<NetworkStatistics> networks;
  std::vector<std::size_t> network_records;  // store index of each network
  std::vector<DatasetSlice> datasets;
  std::vector<double> alphas;  // one per dataset

  /// Statistics of the first record of the first dataset; mutants failing
  /// validity on it are rejected before full fitness is computed.
  const NetworkStatistics& probe() const { return networks.at(datasets.front().networks.front()); }
};

struct FitnessContextOptions {
  std::vector<std::string> datasets;  // empty: every dataset with the metric
  bool distill = true;
  std::size_t subset_size = 100;
  std::uint64_t seed = 0;
  std::vector<double> alphas;
  CaptureMode mode = CaptureMode::kStandard;
  std::optional<int> scale;
  std::size_t jobs = 1;
};

/// Draws a fixed subset (without replacement) of `candidates` per dataset
/// and captures statistics for each distinct record once.
inline FitnessContext build_fitness_context(const BenchStore& store, const std::vector<std::size_t>& candidates,
                                            const FitnessContextOptions& opt,
                                            const StatsProvider& provider = simulator_provider()) {
  const auto ids = opt.datasets.empty() ? store.datasets() : opt.datasets;
  if (ids.empty()) throw ConfigError("store has no datasets");
  if (!opt.alphas.empty() && opt.alphas.size() != ids.size())
    throw ConfigError(std::to_string(opt.alphas.size()) + " dataset weights for " + std::to_string(ids.size()) +
                      " datasets");
  FitnessContext ctx;
  ctx.alphas = opt.alphas.empty() ? std::vector<double>(ids.size(), 1.0) : opt.alphas;
  std::map<std::size_t, std::size_t> position;
  for (std::size_t d = 0; d < ids.size(); ++d) {
    std::vector<std::size_t> pool;
    for (auto i : candidates)
      if (has_metric(record_at(store, i), ids[d], opt.distill)) pool.push_back(i);
    if (pool.size() < 2)
      throw ConfigError("dataset '" + ids[d] + "' has fewer than two records with the requested metric");
    Rng rng = make_rng(opt.seed, {0xf17, d});
    const std::size_t take = std::min(opt.subset_size, pool.size());
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    pool.resize(take);
    std::sort(pool.begin(), pool.end());
    DatasetSlice slice;
    slice.id = ids[d];
    slice.records = pool;
    for (auto i : pool) {
      slice.accuracies.push_back(acc_by_idx(store, i, ids[d], opt.distill));
      auto [it, fresh] = position.emplace(i, position.size());
      slice.networks.push_back(it->second);
    }
    ctx.datasets.push_back(std::move(slice));
  }
  ctx.network_records.resize(position.size());
  for (const auto& [rec, pos] : position) ctx.network_records[pos] = rec;
  ctx.networks.resize(position.size());
  parallel_for(ctx.networks.size(), opt.jobs, [&](std::size_t k) {
    const auto& r = record_at(store, ctx.network_records[k]);
    ctx.networks[k] = provider(r.arch, capture_info_for(r, opt.seed, opt.mode, opt.scale));
  });
  return ctx;
}

/// JCM of Kendall tau between scores and accuracies, or nullopt (Invalid) if
/// any network score is invalid or any tau is NaN.
inline std::optional<double> fitness(const ProxyGraph& g, const FitnessContext& ctx) {
  std::vector<double> scores(ctx.networks.size());
  for (std::size_t k = 0; k < ctx.networks.size(); ++k) {
    const auto s = score_network(g, ctx.networks[k]);
    if (s.is_invalid()) return std::nullopt;
    scores[k] = s.value();
  }
  std::vector<double> taus;
  std::vector<double> xs;
  for (const auto& d : ctx.datasets) {
    xs.clear();
    for (auto k : d.networks) xs.push_back(scores[k]);
    const double t = kendall_tau(xs, d.accuracies);
    if (std::isnan(t)) return std::nullopt;
    taus.push_back(t);
  }
  return jcm(taus, ctx.alphas);
}

/// Thread-safe memo of fitness keyed by the canonical graph text.
class FitnessCache {
 public:
  explicit FitnessCache(const FitnessContext& ctx) : ctx_(ctx) {}

  std::optional<double> operator()(const ProxyGraph& g) {
    const auto key = serialize_graph(g);
    {
      std::lock_guard lock(mutex_);
      if (const auto it = memo_.find(key); it != memo_.end()) {
        ++hits_;
        return it->second;
      }
    }
    std::optional<double> f;
    if (check_validity(score_network(g, ctx_.probe()))) f = fitness(g, ctx_);
    std::lock_guard lock(mutex_);
    memo_.emplace(key, f);
    ++evaluations_;
    return f;
  }

  std::size_t evaluations() const noexcept { return evaluations_; }
  std::size_t hits() const noexcept { return hits_; }

 private:
  const FitnessContext& ctx_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::optional<double>> memo_;
  std::size_t evaluations_ = 0;
  std::size_t hits_ = 0;
};

// ---------------------------------------------------------------------------
// Search

struct Member {
  ProxyGraph graph;
  double fitness = 0.0;
};

/// kMargin: passed the margin test. kFallback: best improving mutant after
/// the retry cap. kDirect: random search insertion. kNone: nothing admitted.
enum class AcceptPath { kMargin, kFallback, kDirect, kNone };

inline std::string_view accept_path_name(AcceptPath p) noexcept {
  switch (p) {
    case AcceptPath::kMargin: return "margin";
    case AcceptPath::kFallback: return "fallback";
    case AcceptPath::kDirect: return "direct";
    case AcceptPath::kNone: return "none";
  }
  return "?";
}

struct IterationRecord {
  std::size_t iteration = 0;  // 0 is the initial population
  double best_jcm = 0.0;      // best ever, so non-decreasing
  double mean_jcm = 0.0;      // over the current population
  bool accepted = false;
  AcceptPath path = AcceptPath::kNone;
  std::size_t retries = 0;          // mutation attempts beyond the first
  std::size_t invalid_mutants = 0;  // among the attempts that counted
  double parent_jcm = std::numeric_limits<double>::quiet_NaN();
  double child_jcm = std::numeric_limits<double>::quiet_NaN();  // the admitted one
};

struct EvolutionTrace {
  Strategy strategy = Strategy::kElitism;
  std::vector<IterationRecord> iterations;
};

struct EvolutionResult {
  ProxyGraph best;
  double best_jcm = 0.0;
  EvolutionTrace trace;
  std::vector<Member> population;  // final
  std::size_t evaluations = 0;     // distinct graphs scored (diagnostic only)
};

/// First iteration whose best-ever JCM reaches `threshold`; 0 means the
/// initial population already did, iterations + 1 means never.
inline std::size_t iterations_to_threshold(const EvolutionTrace& trace, double threshold) {
  for (const auto& r : trace.iterations)
    if (r.best_jcm >= threshold) return r.iteration;
  return trace.iterations.empty() ? 1 : trace.iterations.back().iteration + 1;
}

namespace detail {

inline double population_mean(const std::vector<Member>& pop) {
  double s = 0.0;
  for (const auto& m : pop) s += m.fitness;
  return s / static_cast<double>(pop.size());
}

/// Evaluates candidates in order in chunks of `jobs`, stopping at the first
/// chunk that contains an index for which `done` holds. Returns fitness for
/// every evaluated index; results past the stopping index are speculative
/// and ignored by callers, so the outcome does not depend on `jobs`.
template <class Make, class Done>
std::vector<std::optional<double>> evaluate_in_order(std::size_t n, std::size_t jobs, FitnessCache& cache, Make make,
                                                     Done done) {
  std::vector<std::optional<double>> out;
  std::vector<ProxyGraph> chunk;
  const std::size_t step = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < n; start += step) {
    const std::size_t end = std::min(n, start + step);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) chunk.push_back(make(i));
    std::vector<std::optional<double>> f(chunk.size());
    parallel_for(chunk.size(), jobs, [&](std::size_t k) { f[k] = cache(chunk[k]); });
    bool stop = false;
    for (std::size_t k = 0; k < f.size(); ++k) {
      out.push_back(f[k]);
      if (done(start + k, f[k])) {
        stop = true;
        break;
      }
    }
    if (stop) break;
  }
  return out;
}

inline void insert_and_trim(std::vector<Member>& pop, Member m) {
  pop.push_back(std::move(m));
  std::size_t worst = 0;
  for (std::size_t i = 1; i < pop.size(); ++i)
    if (pop[i].fitness < pop[worst].fitness) worst = i;
  pop.erase(pop.begin() + static_cast<std::ptrdiff_t>(worst));
}

/// Shared seed layout: initial population, then per-iteration streams.
enum : std::uint64_t { kInitStream = 1, kPoolStream = 2, kMutantStream = 3, kRandomStream = 4 };

inline std::vector<Member> initial_population(const EvolutionSettings& s, FitnessCache& cache) {
  std::vector<Member> pop;
  const std::size_t budget = s.population * s.init_attempts_per_member;
  std::size_t drawn = 0;
  while (pop.size() < s.population) {
    if (drawn >= budget)
      throw ExhaustedSampling("found only " + std::to_string(pop.size()) + " valid graphs in " +
                              std::to_string(budget) + " draws");
    const std::size_t batch = std::min(s.population, budget - drawn);
    std::vector<ProxyGraph> cand(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      Rng rng = make_rng(s.seed, {kInitStream, drawn + i});
      cand[i] = random_graph(rng);
    }
    drawn += batch;
    std::vector<std::optional<double>> f(batch);
    parallel_for(batch, s.jobs, [&](std::size_t i) { f[i] = cache(cand[i]); });
    for (std::size_t i = 0; i < batch && pop.size() < s.population; ++i)
      if (f[i]) pop.push_back({cand[i], *f[i]});
  }
  return pop;
}

inline void track_best(const std::vector<Member>& pop, ProxyGraph& best, double& best_jcm, bool& have) {
  for (const auto& m : pop)
    if (!have || m.fitness > best_jcm) {
      best = m.graph;
      best_jcm = m.fitness;
      have = true;
    }
}

}  // namespace detail

/// Runs one search. kElitism uses `settings.margin`; kNaive admits every
/// valid mutant (margin -inf); kRandom replaces mutation by fresh random
/// graphs. All three share the initial population for a given seed.
inline EvolutionResult run_search(Strategy strategy, const EvolutionSettings& settings, const FitnessContext& ctx) {
  EvolutionSettings s = settings;
  if (strategy == Strategy::kNaive) s.margin = -std::numeric_limits<double>::infinity();
  s.validate();
  if (ctx.datasets.empty()) throw ConfigError("fitness context has no datasets");

  FitnessCache cache(ctx);
  EvolutionResult res;
  res.trace.strategy = strategy;
  std::vector<Member> pop = detail::initial_population(s, cache);
  bool have = false;
  detail::track_best(pop, res.best, res.best_jcm, have);
  {
    IterationRecord r;
    r.best_jcm = res.best_jcm;
    r.mean_jcm = detail::population_mean(pop);
    res.trace.iterations.push_back(r);
  }

  const std::size_t pool_n = s.pool_size();
  const bool done_early = s.stop_at && res.best_jcm >= *s.stop_at;
  for (std::size_t t = 1; !done_early && t <= s.iterations; ++t) {
    IterationRecord rec;
    rec.iteration = t;
    std::optional<Member> admitted;

    if (strategy == Strategy::kRandom) {
      auto make = [&](std::size_t a) {
        Rng rng = make_rng(s.seed, {detail::kRandomStream, t, a});
        return random_graph(rng);
      };
      const auto f = detail::evaluate_in_order(s.retry_cap, s.jobs, cache, make,
                                               [](std::size_t, const std::optional<double>& v) { return v.has_value(); });
      for (std::size_t a = 0; a < f.size(); ++a) {
        if (!f[a]) {
          ++rec.invalid_mutants;
          continue;
        }
        rec.retries = a;
        admitted = Member{make(a), *f[a]};
        rec.path = AcceptPath::kDirect;
        break;
      }
      if (!admitted) rec.retries = s.retry_cap - 1;
    } else {
      // Pool without replacement, then top-k by fitness (lower index wins ties).
      Rng prng = make_rng(s.seed, {detail::kPoolStream, t});
      std::vector<std::size_t> idx(pop.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < pool_n; ++i) std::swap(idx[i], idx[i + uniform_index(prng, idx.size() - i)]);
      idx.resize(pool_n);
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return pop[a].fitness != pop[b].fitness ? pop[a].fitness > pop[b].fitness : a < b;
      });
      const Member parent = pop[idx[uniform_index(prng, s.topk)]];
      rec.parent_jcm = parent.fitness;

      auto make = [&](std::size_t a) {
        Rng rng = make_rng(s.seed, {detail::kMutantStream, t, a});
        return mutate(parent.graph, rng, s.mutation_prob);
      };
      auto passes = [&](const std::optional<double>& v) { return v && *v - parent.fitness >= s.margin; };
      const auto f = detail::evaluate_in_order(s.retry_cap, s.jobs, cache, make,
                                               [&](std::size_t, const std::optional<double>& v) { return passes(v); });
      std::optional<std::size_t> best_seen;
      for (std::size_t a = 0; a < f.size(); ++a) {
        rec.retries = a;
        if (!f[a]) {
          ++rec.invalid_mutants;
          continue;
        }
        if (passes(f[a])) {
          admitted = Member{make(a), *f[a]};
          rec.path = AcceptPath::kMargin;
          break;
        }
        if (!best_seen || *f[a] > *f[*best_seen]) best_seen = a;
      }
      if (!admitted && best_seen && *f[*best_seen] > parent.fitness) {
        admitted = Member{make(*best_seen), *f[*best_seen]};
        rec.path = AcceptPath::kFallback;
      }
    }

    if (admitted) {
      rec.accepted = true;
      rec.child_jcm = admitted->fitness;
      detail::insert_and_trim(pop, *admitted);
      detail::track_best(pop, res.best, res.best_jcm, have);
    }
    rec.best_jcm = res.best_jcm;
    rec.mean_jcm = detail::population_mean(pop);
    res.trace.iterations.push_back(rec);
    if (s.stop_at && res.best_jcm >= *s.stop_at) break;
  }
  res.population = std::move(pop);
  res.evaluations = cache.evaluations();
  return res;
}

inline EvolutionResult evolve(const EvolutionSettings& s, const FitnessContext& ctx) {
  return run_search(Strategy::kElitism, s, ctx);
}

inline EvolutionResult evolve_naive(const EvolutionSettings& s, const FitnessContext& ctx) {
  return run_search(Strategy::kNaive, s, ctx);
}

inline EvolutionResult random_search(const EvolutionSettings& s, const FitnessContext& ctx) {
  return run_search(Strategy::kRandom, s, ctx);
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kTraceCsvHeader =
    "iteration,best_jcm,mean_jcm,accepted,retries,invalid_mutants,path";

inline void write_trace_csv(std::ostream& os, const EvolutionTrace& trace) {
  os << kTraceCsvHeader << '\n';
  char buf[160];
  for (const auto& r : trace.iterations) {
    std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%d,%zu,%zu,%s\n", r.iteration, r.best_jcm, r.mean_jcm,
                  r.accepted ? 1 : 0, r.retries, r.invalid_mutants,
                  r.iteration == 0 ? "init" : std::string(accept_path_name(r.path)).c_str());
    os << buf;
  }
}

}  // namespace proxforge
