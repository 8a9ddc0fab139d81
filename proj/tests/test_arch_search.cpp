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

#include "proxforge/arch_search.hpp"
#include "test_support.hpp"

namespace proxforge {
namespace {

using testing::fake_provider;

Candidate scored(std::size_t index, ProxyScore s) {
  Candidate c;
  c.index = index;
  c.score = s;
  return c;
}

TEST(SelectBest, HighestValidLowestIndexOnTies) {
  std::vector<Candidate> c{scored(0, ProxyScore::of(0.5)), scored(1, ProxyScore::invalid(InvalidReason::kNaN)),
                           scored(2, ProxyScore::of(2.5)), scored(3, ProxyScore::of(2.5)),
                           scored(4, ProxyScore::of(1.0))};
  EXPECT_EQ(select_best(c), 2u);
  std::vector<Candidate> none{scored(0, ProxyScore::invalid(InvalidReason::kInf)), scored(1, ProxyScore::of(0.0))};
  EXPECT_THROW(select_best(none), AllInvalid);
}

TEST(SampleInRange, RespectsBoundsAndCount) {
  SearchOptions opt;
  opt.n = 400;
  opt.seed = 81;
  std::size_t attempts = 0;
  const auto cfgs = sample_in_range(opt, &attempts);
  ASSERT_EQ(cfgs.size(), 400u);
  EXPECT_GE(attempts, 400u);
  for (const auto& c : cfgs) {
    EXPECT_NO_THROW(validate_arch(c));
    EXPECT_GE(param_count(c), 4'000'000);
    EXPECT_LE(param_count(c), 9'000'000);
  }
  EXPECT_EQ(sample_in_range(opt), cfgs);
}

TEST(SampleInRange, PiTAndImpossibleRanges) {
  SearchOptions opt;
  opt.space = Space::kPiT;
  opt.n = 50;
  opt.min_params = 2'000'000;
  opt.max_params = 25'000'000;
  for (const auto& c : sample_in_range(opt)) {
    EXPECT_GE(param_count(c), 2'000'000);
    EXPECT_LE(param_count(c), 25'000'000);
  }
  opt.space = Space::kAutoFormer;
  opt.min_params = 1;
  opt.max_params = 1000;
  opt.n = 3;
  EXPECT_THROW(sample_in_range(opt), ExhaustedSampling);
  opt.min_params = 10;
  opt.max_params = 5;
  EXPECT_THROW(sample_in_range(opt), ConfigError);
}

TEST(Search, PlantedProxyPicksMostAccurateRecord) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SyntheticSpec spec;
    spec.count = 120;
    spec.seed = seed;
    const BenchStore store = generate_synthetic(spec, 1, fake_provider());
    const SearchReport rep = search_store(spec.planted, store, 0, 1, fake_provider());
    for (const auto& d : spec.datasets) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < store.size(); ++i)
        if (acc_by_idx(store, i, d, true) > acc_by_idx(store, best, d, true)) best = i;
      EXPECT_EQ(rep.best_candidate().index, best) << d;
    }
  }
}

TEST(Search, SimulatorRunIsDeterministicAcrossJobs) {
  SearchOptions opt;
  opt.n = 24;
  opt.seed = 82;
  const auto a = search(Proxy{Builtin::kAutoProxA}, opt);
  opt.jobs = 3;
  const auto b = search(Proxy{Builtin::kAutoProxA}, opt);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(a.candidates.size(), 24u);
  for (const auto& c : a.candidates) EXPECT_LE(c.score.value(), a.best_candidate().score.value());
}

TEST(Search, SynflowProxyUsesSynflowCaptures) {
  SearchOptions opt;
  opt.n = 4;
  opt.seed = 83;
  const auto rep = search(Proxy{Builtin::kSynflow}, opt);
  for (const auto& c : rep.candidates) EXPECT_EQ(c.capture.mode, CaptureMode::kSynflow);
}

TEST(Search, OutputFormats) {
  SearchOptions opt;
  opt.n = 5;
  opt.seed = 84;
  auto rep = search(Proxy{autoprox_p_graph()}, opt, fake_provider());
  rep.candidates[3].score = ProxyScore::invalid(InvalidReason::kShapeMismatch);
  rep.best = select_best(rep.candidates);
  const auto j = report_to_json(rep);
  EXPECT_EQ(j["proxy"], serialize_graph(autoprox_p_graph()));
  EXPECT_EQ(j["candidates"].size(), 5u);
  EXPECT_TRUE(j["candidates"][3]["score"].is_null());
  EXPECT_EQ(j["candidates"][3]["invalid"], "shape-mismatch");
  EXPECT_EQ(j["param_range"][0], 4'000'000);
  std::stringstream csv, plot;
  write_report_csv(csv, rep);
  write_plot_csv(plot, rep);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "index,params,score");
  int rows = 0, invalid = 0;
  while (std::getline(csv, line)) {
    ++rows;
    invalid += line.ends_with(",invalid");
  }
  EXPECT_EQ(rows, 5);
  EXPECT_EQ(invalid, 1);
  std::getline(plot, line);
  EXPECT_EQ(line, "params,score,selected");
  int selected = 0, plotted = 0;
  while (std::getline(plot, line)) {
    ++plotted;
    selected += line.ends_with(",1");
  }
  EXPECT_EQ(plotted, 4);
  EXPECT_EQ(selected, 1);
}

}  // namespace
}  // namespace proxforge
