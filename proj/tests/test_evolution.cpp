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

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "proxforge/evolution.hpp"
#include "test_support.hpp"

namespace proxforge {
namespace {

using testing::fake_provider;

struct World {
  BenchStore store;
  FitnessContext ctx;
};

World make_world(double noise, std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.count = 80;
  spec.noise_std = noise;
  spec.seed = seed;
  spec.datasets = {"cifar100", "flowers"};
  World w;
  w.store = generate_synthetic(spec, 1, fake_provider());
  FitnessContextOptions opt;
  opt.subset_size = 40;
  opt.seed = 2;
  std::vector<std::size_t> all(w.store.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  w.ctx = build_fitness_context(w.store, all, opt, fake_provider());
  return w;
}

const World& noisy_world() {
  static const World w = make_world(0.5);
  return w;
}

EvolutionSettings small_settings(std::uint64_t seed) {
  EvolutionSettings s;
  s.population = 10;
  s.iterations = 40;
  s.topk = 3;
  s.retry_cap = 8;
  s.seed = seed;
  return s;
}

bool same_trace(const EvolutionTrace& a, const EvolutionTrace& b) {
  if (a.iterations.size() != b.iterations.size()) return false;
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    const auto& x = a.iterations[i];
    const auto& y = b.iterations[i];
    if (x.best_jcm != y.best_jcm || x.mean_jcm != y.mean_jcm || x.accepted != y.accepted || x.path != y.path ||
        x.retries != y.retries || x.invalid_mutants != y.invalid_mutants)
      return false;
  }
  return true;
}

TEST(Fitness, PlantedNegatedAndConstant) {
  const World w = make_world(0.0);
  ASSERT_TRUE(fitness(autoprox_a_graph(), w.ctx).has_value());
  EXPECT_EQ(*fitness(autoprox_a_graph(), w.ctx), 1.0);
  ProxyGraph negated = autoprox_a_graph();
  negated.ops_a[1] = OpId::kRevert;
  negated.combine = OpId::kDifference;
  EXPECT_EQ(*fitness(negated, w.ctx), -1.0);
  const ProxyGraph constant{StatSlot::kF1, {OpId::kNoOp, OpId::kToMeanScalar}, StatSlot::kF1,
                            {OpId::kNoOp, OpId::kToMeanScalar}, OpId::kDifference};
  EXPECT_FALSE(fitness(constant, w.ctx).has_value());
}

TEST(Fitness, ContextSubsetsAreFrozenAndSized) {
  const World& w = noisy_world();
  ASSERT_EQ(w.ctx.datasets.size(), 2u);
  for (const auto& d : w.ctx.datasets) {
    EXPECT_EQ(d.records.size(), 40u);
    EXPECT_TRUE(std::is_sorted(d.records.begin(), d.records.end()));
    for (std::size_t i = 0; i < d.records.size(); ++i) {
      EXPECT_EQ(w.ctx.network_records[d.networks[i]], d.records[i]);
      EXPECT_EQ(d.accuracies[i], acc_by_idx(w.store, d.records[i], d.id, true));
    }
  }
  const World again = make_world(0.5);
  for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(again.ctx.datasets[d].records, w.ctx.datasets[d].records);
  EXPECT_NE(w.ctx.datasets[0].records, w.ctx.datasets[1].records);
}

TEST(Fitness, AlphasWeightDatasets) {
  const World& w = noisy_world();
  FitnessContext weighted = w.ctx;
  weighted.alphas = {2.0, 0.0};
  FitnessContext first_only = w.ctx;
  first_only.datasets.resize(1);
  first_only.alphas = {1.0};
  EXPECT_NEAR(*fitness(autoprox_a_graph(), weighted), *fitness(autoprox_a_graph(), first_only), 1e-15);
}

TEST(Fitness, CacheCountsAndAgrees) {
  const World& w = noisy_world();
  FitnessCache cache(w.ctx);
  EXPECT_EQ(cache(autoprox_p_graph()), fitness(autoprox_p_graph(), w.ctx));
  cache(autoprox_p_graph());
  EXPECT_EQ(cache.evaluations(), 1u);
  EXPECT_EQ(cache.hits(), 1u);
}

TEST(Settings, Validation) {
  EvolutionSettings s;
  EXPECT_EQ(s.pool_size(), 10u);
  EXPECT_NO_THROW(s.validate());
  s.topk = 11;
  EXPECT_THROW(s.validate(), ConfigError);
  s = EvolutionSettings{};
  s.margin = -0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s.margin = -std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(s.validate());
  s = EvolutionSettings{};
  s.retry_cap = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = EvolutionSettings{};
  s.mutation_prob = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_THROW(parse_strategy("greedy"), ConfigError);
  EXPECT_EQ(parse_strategy("naive"), Strategy::kNaive);
}

TEST(Evolution, SameSeedSameTrace) {
  const World& w = noisy_world();
  const auto a = evolve(small_settings(3), w.ctx);
  const auto b = evolve(small_settings(3), w.ctx);
  EXPECT_TRUE(same_trace(a.trace, b.trace));
  EXPECT_EQ(a.best, b.best);
}

TEST(Evolution, JobsDoNotChangeOutcome) {
  const World& w = noisy_world();
  for (Strategy st : {Strategy::kElitism, Strategy::kNaive, Strategy::kRandom}) {
    EvolutionSettings one = small_settings(4), many = small_settings(4);
    many.jobs = 3;
    const auto a = run_search(st, one, w.ctx);
    const auto b = run_search(st, many, w.ctx);
    EXPECT_TRUE(same_trace(a.trace, b.trace)) << strategy_name(st);
    EXPECT_EQ(a.best, b.best);
  }
}

TEST(Evolution, TraceAndPopulationInvariants) {
  const World& w = noisy_world();
  for (std::uint64_t seed = 0; seed < 4; ++seed)
    for (Strategy st : {Strategy::kElitism, Strategy::kNaive, Strategy::kRandom}) {
      const EvolutionSettings s = small_settings(seed);
      const auto r = run_search(st, s, w.ctx);
      ASSERT_EQ(r.trace.iterations.size(), s.iterations + 1);
      EXPECT_EQ(r.population.size(), s.population);
      for (std::size_t i = 1; i < r.trace.iterations.size(); ++i) {
        const auto& it = r.trace.iterations[i];
        EXPECT_GE(it.best_jcm, r.trace.iterations[i - 1].best_jcm);
        EXPECT_EQ(it.accepted, it.path != AcceptPath::kNone);
        if (st == Strategy::kElitism && it.path == AcceptPath::kMargin) {
          EXPECT_GE(it.child_jcm, it.parent_jcm + s.margin);
        }
        if (it.path == AcceptPath::kFallback) {
          EXPECT_GT(it.child_jcm, it.parent_jcm);
        }
        if (st == Strategy::kRandom) {
          EXPECT_NE(it.path, AcceptPath::kMargin);
        }
        EXPECT_LE(it.retries, s.retry_cap - 1);
      }
      double best = -2.0;
      for (const auto& m : r.population) {
        EXPECT_TRUE(check_validity(score_network(m.graph, w.ctx.probe())));
        EXPECT_EQ(fitness(m.graph, w.ctx), m.fitness);
        best = std::max(best, m.fitness);
      }
      EXPECT_LE(best, r.best_jcm);
      EXPECT_EQ(*fitness(r.best, w.ctx), r.best_jcm);
    }
}

TEST(Evolution, StrategiesShareInitialPopulation) {
  const World& w = noisy_world();
  const auto e = evolve(small_settings(5), w.ctx);
  const auto n = evolve_naive(small_settings(5), w.ctx);
  const auto r = random_search(small_settings(5), w.ctx);
  EXPECT_EQ(e.trace.iterations[0].mean_jcm, n.trace.iterations[0].mean_jcm);
  EXPECT_EQ(e.trace.iterations[0].mean_jcm, r.trace.iterations[0].mean_jcm);
}

TEST(Evolution, NaiveIsElitismWithUnboundedMargin) {
  const World& w = noisy_world();
  for (std::size_t cap : {std::size_t{1}, std::size_t{8}}) {
    EvolutionSettings s = small_settings(6);
    s.retry_cap = cap;
    const auto naive = evolve_naive(s, w.ctx);
    s.margin = -std::numeric_limits<double>::infinity();
    const auto elitism = evolve(s, w.ctx);
    EXPECT_TRUE(same_trace(naive.trace, elitism.trace)) << cap;
    for (std::size_t i = 1; i < naive.trace.iterations.size(); ++i)
      EXPECT_NE(naive.trace.iterations[i].path, AcceptPath::kFallback);
  }
}

TEST(Evolution, StopAtTruncatesAnIdenticalPrefix) {
  const World& w = noisy_world();
  EvolutionSettings s = small_settings(7);
  const auto full = evolve(s, w.ctx);
  const double target = full.trace.iterations[s.iterations / 2].best_jcm;
  s.stop_at = target;
  const auto cut = evolve(s, w.ctx);
  const std::size_t hit = iterations_to_threshold(full.trace, target);
  ASSERT_EQ(cut.trace.iterations.size(), hit + 1);
  EvolutionTrace prefix = full.trace;
  prefix.iterations.resize(hit + 1);
  EXPECT_TRUE(same_trace(prefix, cut.trace));
  EXPECT_EQ(iterations_to_threshold(full.trace, 2.0), s.iterations + 1);
  EXPECT_EQ(iterations_to_threshold(full.trace, -1.0), 0u);
}

TEST(Evolution, FindsPlantedProxyRegionOnCleanData) {
  const World w = make_world(0.0, 9);
  EvolutionSettings s = small_settings(8);
  s.iterations = 60;
  const auto e = evolve(s, w.ctx);
  EXPECT_GT(e.best_jcm, e.trace.iterations[0].mean_jcm);
}

TEST(Evolution, TraceCsvFormat) {
  const World& w = noisy_world();
  EvolutionSettings s = small_settings(9);
  s.iterations = 2;
  const auto r = evolve(s, w.ctx);
  std::stringstream ss;
  write_trace_csv(ss, r.trace);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "iteration,best_jcm,mean_jcm,accepted,retries,invalid_mutants,path");
  std::getline(ss, line);
  EXPECT_EQ(line.rfind("0,", 0), 0u);
  EXPECT_NE(line.find(",init"), std::string::npos);
  int rows = 1;
  while (std::getline(ss, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Evolution, ExhaustedInitialisation) {
  const World& w = noisy_world();
  FitnessContext impossible = w.ctx;
  for (auto& d : impossible.datasets) std::fill(d.accuracies.begin(), d.accuracies.end(), 50.0);
  EvolutionSettings s = small_settings(1);
  s.init_attempts_per_member = 2;
  EXPECT_THROW(evolve(s, impossible), ExhaustedSampling);
}

}  // namespace
}  // namespace proxforge
