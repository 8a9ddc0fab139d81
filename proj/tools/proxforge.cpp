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

// Command-line front end. Data goes to files or standard output, diagnostics
// to standard error. Exit codes: 0 success, 1 internal error or failed
// gradient check, 2 input or validation error.

#include <openssl/evp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "proxforge/arch_search.hpp"
#include "proxforge/archive.hpp"
#include "proxforge/bench_store.hpp"
#include "proxforge/evolution.hpp"
#include "proxforge/metrics.hpp"
#include "proxforge/vit_sim.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace proxforge::cli {
namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Files and digests

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::string out;
  char hex[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(hex, sizeof hex, "%02x", md[i]);
    out += hex;
  }
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << bytes;
}

/// Digest of a file, or of every file in a directory keyed by relative path.
ordered_json digest(const fs::path& p) {
  if (!fs::is_directory(p)) return sha256_hex(read_file(p));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ordered_json j = ordered_json::object();
  for (const auto& f : files) j[fs::relative(f, p).generic_string()] = sha256_hex(read_file(f));
  return j;
}

/// Writes `bytes` to `path`, or to standard output when the path is empty.
void emit(const std::string& path, const std::string& bytes) {
  if (path.empty())
    std::cout << bytes << std::flush;
  else
    write_file(path, bytes);
}

// ---------------------------------------------------------------------------
// Run manifest

/// Everything needed to replay a run. Job count is recorded apart from the
/// settings since it never changes the outputs.
struct Manifest {
  explicit Manifest(std::string cmd) : command(std::move(cmd)) {}

  std::string command;
  ordered_json settings = ordered_json::object();
  std::vector<std::string> inputs, outputs;

  void write(const std::string& path, std::uint64_t seed, std::size_t jobs) const {
    ordered_json j;
    j["tool"] = "proxforge";
    j["version"] = kVersion;
    j["command"] = command;
    j["seed"] = seed;
    j["settings"] = settings;
    j["execution"] = {{"jobs", jobs}};
    ordered_json in = ordered_json::object(), out = ordered_json::object();
    for (const auto& p : inputs) in[p] = digest(p);
    for (const auto& p : outputs) out[p] = digest(p);
    j["inputs"] = std::move(in);
    j["outputs"] = std::move(out);
    write_file(path, j.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// Shared option parsing

struct Common {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string manifest;  // default: <primary output>.run.json
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Master seed for every random choice")->envname("PROXFORGE_SEED");
  cmd->add_option("--jobs", c.jobs, "Worker threads; outputs do not depend on it")->check(CLI::PositiveNumber);
  cmd->add_option("--manifest", c.manifest, "Run manifest path");
}

void finish(const Manifest& m, const Common& c, const std::string& primary_out) {
  const std::string path = !c.manifest.empty() ? c.manifest : primary_out.empty() ? "" : primary_out + ".run.json";
  if (!path.empty()) m.write(path, c.seed, c.jobs);
}

/// A builtin name, a file holding a proxy, or inline proxy JSON.
Proxy resolve_proxy(const std::string& arg) {
  if (parse_builtin(arg)) return parse_proxy(arg);
  std::error_code ec;
  if (fs::is_regular_file(arg, ec)) return parse_proxy(read_file(arg));
  return parse_proxy(arg);
}

bool is_file(const std::string& arg) {
  std::error_code ec;
  return !parse_builtin(arg) && fs::is_regular_file(arg, ec);
}

std::pair<std::int64_t, std::int64_t> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("parameter range must look like MIN:MAX, got '" + s + "'");
  try {
    std::size_t used = 0;
    const double lo = std::stod(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("trailing");
    const std::string hi_text = s.substr(colon + 1);
    const double hi = std::stod(hi_text, &used);
    if (used != hi_text.size()) throw std::invalid_argument("trailing");
    return {std::llround(lo), std::llround(hi)};
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse parameter range '" + s + "'");
  }
}

BatchSpec batch_for(std::optional<int> batch_size) {
  BatchSpec b;
  if (batch_size) b.batch = *batch_size;
  return b;
}

ordered_json batch_json(const BatchSpec& b) { return ordered_json::parse(batch_to_json(b).dump()); }

std::string proxy_text(const Proxy& p) { return p.name(); }

// ---------------------------------------------------------------------------
// gen-stats

struct GenStatsArgs {
  Common common;
  std::string space = "autoformer";
  std::string arch_file;
  std::optional<int> scale, batch_size;
  std::string mode = "standard";
  std::string out;
};

void setup_gen_stats(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<GenStatsArgs>();
  auto* cmd = app.add_subcommand("gen-stats", "Capture statistics for one architecture into an archive");
  add_common(cmd, a->common);
  cmd->add_option("--space", a->space, "Search space: autoformer, autoformer_b or pit");
  cmd->add_option("--arch", a->arch_file, "Architecture JSON; sampled from the space when omitted");
  cmd->add_option("--scale", a->scale, "Width divisor for the simulated model");
  cmd->add_option("--batch-size", a->batch_size, "Images per capture batch");
  cmd->add_option("--mode", a->mode, "standard or synflow")->check(CLI::IsMember({"standard", "synflow"}));
  cmd->add_option("--out", a->out, "Archive directory")->required();
  cmd->callback([a, &run] {
    run = [a] {
      const Space space = parse_space(a->space);
      ArchConfig cfg;
      if (a->arch_file.empty()) {
        Rng rng = make_rng(a->common.seed, {0x9e5});
        cfg = sample_arch(space, rng);
      } else {
        cfg = arch_from_json(space, nlohmann::json::parse(read_file(a->arch_file)));
      }
      const int scale = a->scale.value_or(default_scale(space));
      const BatchSpec batch = batch_for(a->batch_size);
      const auto seed = derive_seed(a->common.seed, {0xca7});
      const auto net = a->mode == "synflow" ? sim::capture_synflow(cfg, scale, seed, batch)
                                            : sim::capture_statistics(cfg, scale, batch, seed);
      write_archive(net, a->out);
      Manifest m("gen-stats");
      m.settings = {{"space", a->space}, {"arch", ordered_json::parse(arch_to_json(cfg).dump())},
                    {"scale", scale}, {"mode", a->mode}, {"batch", batch_json(batch)}};
      if (!a->arch_file.empty()) m.inputs.push_back(a->arch_file);
      m.outputs.push_back(a->out);
      finish(m, a->common, a->out);
    };
  });
}

// ---------------------------------------------------------------------------
// rank

struct RankArgs {
  Common common;
  std::string proxy, bench, out;
  std::vector<std::string> datasets;
  std::string metric = "dis";
  bool test_only = false;
  double val_fraction = 0.6;
  std::optional<int> scale;
};

void setup_rank(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<RankArgs>();
  auto* cmd = app.add_subcommand("rank", "Correlate proxy scores with benchmark accuracies");
  add_common(cmd, a->common);
  cmd->add_option("--proxy", a->proxy, "Builtin name, proxy file or inline proxy JSON")->required();
  cmd->add_option("--bench", a->bench, "Benchmark store (JSON lines)")->required();
  cmd->add_option("--datasets", a->datasets, "Datasets to report; all by default");
  cmd->add_option("--metric", a->metric, "dis or vanilla accuracy")->check(CLI::IsMember({"dis", "vanilla"}));
  cmd->add_flag("--test-only", a->test_only, "Evaluate on the held-out split only");
  cmd->add_option("--val-fraction", a->val_fraction, "Search split fraction used with --test-only");
  cmd->add_option("--scale", a->scale, "Width divisor for captures without stored settings");
  cmd->add_option("--out", a->out, "Correlation CSV; standard output when omitted");
  cmd->callback([a, &run] {
    run = [a] {
      const Proxy proxy = resolve_proxy(a->proxy);
      const BenchStore store = load_store(a->bench);
      std::vector<std::size_t> idx;
      if (a->test_only) {
        idx = split(store, a->val_fraction, a->common.seed).test;
      } else {
        for (std::size_t i = 0; i < store.size(); ++i) idx.push_back(i);
      }
      const CaptureMode mode = proxy.needs_synflow() ? CaptureMode::kSynflow : CaptureMode::kStandard;
      std::vector<ProxyScore> scores(idx.size(), ProxyScore::invalid(InvalidReason::kNaN));
      parallel_for(idx.size(), a->common.jobs, [&](std::size_t k) {
        const auto& r = store.records[idx[k]];
        scores[k] = score(proxy, capture(r.arch, capture_info_for(r, a->common.seed, mode, a->scale)));
      });
      const bool distill = a->metric == "dis";
      const auto ids = a->datasets.empty() ? store.datasets() : a->datasets;
      std::string csv = std::string(kCorrelationCsvHeader) + "\n";
      for (const auto& d : ids) {
        const bool dd = d == "imagenet" ? false : distill;
        std::vector<double> xs, ys;
        for (std::size_t k = 0; k < idx.size(); ++k) {
          const auto& r = store.records[idx[k]];
          if (!has_metric(r, d, dd) || !check_validity(scores[k])) continue;
          xs.push_back(scores[k].value());
          ys.push_back(acc_by_idx(store, idx[k], d, dd));
        }
        if (xs.size() < 2)
          throw MetricUnavailable("dataset '" + d + "' has fewer than two validly scored records");
        csv += correlation_csv_row(correlate(d, xs, ys), 100.0) + "\n";
      }
      emit(a->out, csv);
      Manifest m("rank");
      m.settings = {{"proxy", proxy_text(proxy)}, {"datasets", ids}, {"metric", a->metric},
                    {"test_only", a->test_only}, {"val_fraction", a->val_fraction}};
      if (a->scale) m.settings["scale"] = *a->scale;
      m.inputs.push_back(a->bench);
      if (is_file(a->proxy)) m.inputs.push_back(a->proxy);
      if (!a->out.empty()) m.outputs.push_back(a->out);
      finish(m, a->common, a->out);
    };
  });
}

// ---------------------------------------------------------------------------
// evolve

struct EvolveArgs {
  Common common;
  std::string bench, out, trace;
  std::string strategy = "elitism";
  EvolutionSettings s;
  std::vector<std::string> datasets;
  std::string metric = "dis";
  double val_fraction = 0.6;
  std::optional<int> scale;
  std::optional<double> stop_at;
};

void setup_evolve(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<EvolveArgs>();
  auto* cmd = app.add_subcommand("evolve", "Evolve a proxy against benchmark ground truth");
  add_common(cmd, a->common);
  cmd->add_option("--bench", a->bench, "Benchmark store (JSON lines)")->required();
  cmd->add_option("--strategy", a->strategy, "elitism, naive or random")
      ->check(CLI::IsMember({"elitism", "naive", "random"}));
  cmd->add_option("--population", a->s.population, "Population size");
  cmd->add_option("--iterations", a->s.iterations, "Iterations");
  cmd->add_option("--sample-ratio", a->s.sample_ratio, "Pool size as a fraction of the population");
  cmd->add_option("--topk", a->s.topk, "Parents drawn from the top of the pool");
  cmd->add_option("--mutation-prob", a->s.mutation_prob, "Per-field mutation probability");
  cmd->add_option("--margin", a->s.margin, "Elitism margin");
  cmd->add_option("--retry-cap", a->s.retry_cap, "Mutation attempts per iteration");
  cmd->add_option("--subset", a->s.subset_size, "Fitness records per dataset");
  cmd->add_option("--alphas", a->s.alphas, "Dataset weights, one per dataset");
  cmd->add_option("--datasets", a->datasets, "Datasets in the fitness; all by default");
  cmd->add_option("--metric", a->metric, "dis or vanilla accuracy")->check(CLI::IsMember({"dis", "vanilla"}));
  cmd->add_option("--val-fraction", a->val_fraction, "Fraction of the store used for the search");
  cmd->add_option("--scale", a->scale, "Width divisor for captures without stored settings");
  cmd->add_option("--stop-at", a->stop_at, "Stop once the best fitness reaches this value");
  cmd->add_option("--out", a->out, "Best proxy file; standard output when omitted");
  cmd->add_option("--trace", a->trace, "Per-iteration trace CSV");
  cmd->callback([a, &run] {
    run = [a] {
      const Strategy strategy = parse_strategy(a->strategy);
      EvolutionSettings s = a->s;
      s.seed = a->common.seed;
      s.jobs = a->common.jobs;
      s.stop_at = a->stop_at;
      s.validate();
      const BenchStore store = load_store(a->bench);
      const Split sp = split(store, a->val_fraction, a->common.seed);
      FitnessContextOptions fo;
      fo.datasets = a->datasets;
      fo.distill = a->metric == "dis";
      fo.subset_size = s.subset_size;
      fo.seed = derive_seed(a->common.seed, {0xf17});
      fo.alphas = s.alphas;
      fo.scale = a->scale;
      fo.jobs = a->common.jobs;
      const FitnessContext ctx = build_fitness_context(store, sp.val, fo);
      const EvolutionResult res = run_search(strategy, s, ctx);
      std::cerr << "best fitness " << res.best_jcm << " after " << res.trace.iterations.size() - 1
                << " iterations\n";
      emit(a->out, serialize_graph(res.best) + "\n");
      if (!a->trace.empty()) {
        std::ostringstream ts;
        write_trace_csv(ts, res.trace);
        write_file(a->trace, ts.str());
      }
      Manifest m("evolve");
      m.settings = {{"strategy", a->strategy},
                    {"population", s.population},
                    {"iterations", s.iterations},
                    {"sample_ratio", s.sample_ratio},
                    {"topk", s.topk},
                    {"mutation_prob", s.mutation_prob},
                    {"margin", s.margin},
                    {"retry_cap", s.retry_cap},
                    {"subset", s.subset_size},
                    {"alphas", ctx.alphas},
                    {"datasets", [&] {
                       std::vector<std::string> ids;
                       for (const auto& d : ctx.datasets) ids.push_back(d.id);
                       return ids;
                     }()},
                    {"metric", a->metric},
                    {"val_fraction", a->val_fraction},
                    {"best_jcm", res.best_jcm}};
      if (a->scale) m.settings["scale"] = *a->scale;
      if (a->stop_at) m.settings["stop_at"] = *a->stop_at;
      m.inputs.push_back(a->bench);
      if (!a->out.empty()) m.outputs.push_back(a->out);
      if (!a->trace.empty()) m.outputs.push_back(a->trace);
      finish(m, a->common, !a->out.empty() ? a->out : a->trace);
    };
  });
}

// ---------------------------------------------------------------------------
// search

struct SearchArgs {
  Common common;
  std::string proxy = "autoprox_a";
  std::string space = "autoformer";
  std::size_t n = 400;
  std::string params;
  std::optional<int> scale, batch_size;
  std::string out, csv, plot;
};

void setup_search(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<SearchArgs>();
  auto* cmd = app.add_subcommand("search", "Score sampled architectures and pick the best");
  add_common(cmd, a->common);
  cmd->add_option("--proxy", a->proxy, "Builtin name, proxy file or inline proxy JSON");
  cmd->add_option("--space", a->space, "Search space: autoformer, autoformer_b or pit");
  cmd->add_option("--n", a->n, "Candidates to score");
  cmd->add_option("--params", a->params, "Full-scale parameter range MIN:MAX (4e6:9e6, or 2e6:25e6 for pit)");
  cmd->add_option("--scale", a->scale, "Width divisor for the simulated models");
  cmd->add_option("--batch-size", a->batch_size, "Images per capture batch");
  cmd->add_option("--out", a->out, "Report JSON; standard output when omitted");
  cmd->add_option("--csv", a->csv, "index,params,score CSV");
  cmd->add_option("--emit-plot-data", a->plot, "params,score,selected CSV of valid candidates");
  cmd->callback([a, &run] {
    run = [a] {
      const Proxy proxy = resolve_proxy(a->proxy);
      SearchOptions opt;
      opt.space = parse_space(a->space);
      opt.n = a->n;
      const auto range = parse_range(!a->params.empty()       ? a->params
                                     : opt.space == Space::kPiT ? "2e6:25e6"
                                                                : "4e6:9e6");
      opt.min_params = range.first;
      opt.max_params = range.second;
      opt.scale = a->scale;
      opt.batch = batch_for(a->batch_size);
      opt.seed = a->common.seed;
      opt.jobs = a->common.jobs;
      const SearchReport rep = search(proxy, opt);
      std::cerr << "best candidate " << rep.best_candidate().index << " score " << rep.best_candidate().score.value()
                << " (" << rep.candidates.size() << " candidates, " << rep.wall_seconds << " s)\n";
      emit(a->out, report_to_json(rep).dump(2) + "\n");
      Manifest m("search");
      if (!a->csv.empty()) {
        std::ostringstream os;
        write_report_csv(os, rep);
        write_file(a->csv, os.str());
        m.outputs.push_back(a->csv);
      }
      if (!a->plot.empty()) {
        std::ostringstream os;
        write_plot_csv(os, rep);
        write_file(a->plot, os.str());
        m.outputs.push_back(a->plot);
      }
      m.settings = {{"proxy", proxy_text(proxy)}, {"space", a->space}, {"n", opt.n},
                    {"param_range", {opt.min_params, opt.max_params}}, {"scale", rep.scale},
                    {"batch", batch_json(opt.batch)}};
      if (is_file(a->proxy)) m.inputs.push_back(a->proxy);
      if (!a->out.empty()) m.outputs.insert(m.outputs.begin(), a->out);
      finish(m, a->common, a->out);
    };
  });
}

// ---------------------------------------------------------------------------
// bench-validate

struct ValidateArgs {
  Common common;
  std::vector<std::string> benches, archives;
};

void setup_bench_validate(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<ValidateArgs>();
  auto* cmd = app.add_subcommand("bench-validate", "Check benchmark stores and statistics archives");
  add_common(cmd, a->common);
  cmd->add_option("bench", a->benches, "Benchmark stores (JSON lines)");
  cmd->add_option("--archive", a->archives, "Statistics archive directories");
  cmd->callback([a, &run] {
    run = [a] {
      if (a->benches.empty() && a->archives.empty()) throw ConfigError("nothing to validate");
      std::string report;
      for (const auto& b : a->benches) {
        const BenchStore store = load_store(b);
        std::string ids;
        for (const auto& d : store.datasets()) ids += (ids.empty() ? "" : ",") + d;
        report += b + ": ok, " + std::to_string(store.size()) + " records, space " +
                  std::string(space_name(store.space)) + ", provenance " +
                  std::string(provenance_name(store.provenance)) + ", datasets " + ids + "\n";
      }
      for (const auto& d : a->archives) {
        const NetworkStatistics net = read_archive(d);
        validate_statistics(net);
        report += d + ": ok, " + std::to_string(net.layers.size()) + " layers, capture_mode " +
                  std::string(capture_mode_name(net.capture_mode)) + "\n";
      }
      std::cout << report;
      if (!a->common.manifest.empty()) {
        Manifest m("bench-validate");
        m.inputs = a->benches;
        m.inputs.insert(m.inputs.end(), a->archives.begin(), a->archives.end());
        finish(m, a->common, "");
      }
    };
  });
}

// ---------------------------------------------------------------------------
// synth-bench

struct SynthArgs {
  Common common;
  SyntheticSpec spec;
  std::string planted = "autoprox_a";
  std::string link = "identity";
  std::string space = "autoformer";
  std::optional<int> batch_size;
  std::string out;
};

void setup_synth_bench(CLI::App& app, std::function<void()>& run) {
  auto a = std::make_shared<SynthArgs>();
  auto* cmd = app.add_subcommand("synth-bench", "Generate a synthetic benchmark from a planted proxy");
  add_common(cmd, a->common);
  cmd->add_option("--planted", a->planted, "Builtin name, proxy file or inline proxy JSON");
  cmd->add_option("--link", a->link, "identity or logistic")->check(CLI::IsMember({"identity", "logistic"}));
  cmd->add_option("--noise", a->spec.noise_std, "Noise std in units of the standardized planted score")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--count", a->spec.count, "Records");
  cmd->add_option("--space", a->space, "Search space: autoformer, autoformer_b or pit");
  cmd->add_option("--datasets", a->spec.datasets, "Datasets to generate");
  cmd->add_option("--scale", a->spec.scale, "Width divisor for the simulated models");
  cmd->add_option("--batch-size", a->batch_size, "Images per capture batch");
  cmd->add_option("--out", a->out, "Store path (JSON lines)")->required();
  cmd->callback([a, &run] {
    run = [a] {
      SyntheticSpec spec = a->spec;
      spec.planted = resolve_proxy(a->planted);
      spec.link = parse_link(a->link);
      spec.space = parse_space(a->space);
      spec.batch = batch_for(a->batch_size);
      spec.seed = a->common.seed;
      const BenchStore store = generate_synthetic(spec, a->common.jobs);
      save_store(store, a->out);
      Manifest m("synth-bench");
      m.settings = {{"planted", proxy_text(spec.planted)}, {"link", a->link}, {"noise", spec.noise_std},
                    {"count", spec.count}, {"space", a->space}, {"datasets", spec.datasets},
                    {"scale", spec.scale.value_or(default_scale(spec.space))}, {"batch", batch_json(spec.batch)}};
      if (is_file(a->planted)) m.inputs.push_back(a->planted);
      m.outputs.push_back(a->out);
      finish(m, a->common, a->out);
    };
  });
}

// ---------------------------------------------------------------------------
// grad-check

struct GradArgs {
  Common common;
  int layers = 2, hidden = 8, heads = 2;
  std::optional<int> mlp_hidden;
  std::string space;
  std::optional<int> scale;
  sim::GradCheckOptions opt;
};

void setup_grad_check(CLI::App& app, std::function<void()>& run, int& exit_code) {
  auto a = std::make_shared<GradArgs>();
  auto* cmd = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
  add_common(cmd, a->common);
  cmd->add_option("--layers", a->layers, "Transformer layers of the toy model");
  cmd->add_option("--hidden", a->hidden, "Embedding width of the toy model");
  cmd->add_option("--heads", a->heads, "Attention heads of the toy model");
  cmd->add_option("--mlp-hidden", a->mlp_hidden, "MLP width of the toy model (default 2x hidden)");
  cmd->add_option("--space", a->space, "Check a sampled architecture from this space instead");
  cmd->add_option("--scale", a->scale, "Width divisor used with --space");
  cmd->add_option("--step", a->opt.step, "Finite-difference step");
  cmd->add_option("--tolerance", a->opt.tolerance, "Relative error tolerance");
  cmd->add_option("--stencil", a->opt.stencil, "2 or 4");
  cmd->callback([a, &run, &exit_code] {
    run = [a, &exit_code] {
      sim::GradCheckReport rep;
      if (!a->space.empty()) {
        const Space space = parse_space(a->space);
        Rng rng = make_rng(a->common.seed, {0x9e5});
        const ArchConfig cfg = sample_arch(space, rng);
        rep = sim::grad_check(cfg, a->scale.value_or(default_scale(space)), a->opt, a->common.seed);
      } else {
        if (a->heads < 1 || a->hidden % a->heads != 0)
          throw ConfigError("hidden width must be a positive multiple of the head count");
        const auto dims =
            sim::toy_dims(a->layers, a->hidden, a->heads, a->hidden / a->heads, a->mlp_hidden.value_or(2 * a->hidden));
        rep = sim::grad_check(dims, sim::grad_check_batch(), a->common.seed, a->opt);
      }
      std::string out = "param,checked,max_rel_error,max_abs_error_small\n";
      char buf[256];
      for (const auto& p : rep.params) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.3e,%.3e\n", p.name.c_str(), p.checked, p.max_rel_error,
                      p.max_abs_error_small);
        out += buf;
      }
      std::cout << out;
      std::cerr << (rep.passed ? "passed" : "FAILED") << ": max relative error " << rep.max_rel_error
                << " (tolerance " << rep.tolerance << ")\n";
      if (!rep.passed) exit_code = 1;
    };
  });
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"proxforge: evolve and evaluate training-free proxies for vision transformers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::function<void()> run;
  int exit_code = 0;
  setup_gen_stats(app, run);
  setup_rank(app, run);
  setup_evolve(app, run);
  setup_search(app, run);
  setup_bench_validate(app, run);
  setup_synth_bench(app, run);
  setup_grad_check(app, run, exit_code);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (run) run();
  } catch (const Error& e) {
    std::cerr << "proxforge: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "proxforge: ParseError: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "proxforge: internal error: " << e.what() << '\n';
    return 1;
  }
  return exit_code;
}

}  // namespace proxforge::cli

int main(int argc, char** argv) { return proxforge::cli::run_cli(argc, argv); }
