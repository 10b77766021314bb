// Copyright 2026 The pagedattn Authors. All Rights Reserved.
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

// pagedattn: verify kernels against the reference, benchmark them, and tune
// selection heuristics.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "pagedattn/tuner.hpp"
#include "pagedattn/verify.hpp"

namespace fs = std::filesystem;
using namespace pagedattn;

namespace {

enum Exit { kOk = 0, kVerifyFailed = 1, kUsage = 2, kIo = 3 };

struct Common {
  std::uint64_t seed = 7;
  std::size_t workers = 0;
  std::vector<std::string> variants;
  std::string scenarios;
  std::string grid;
  std::string out;
  std::string tree;
  bool poison = false;
  Index cases = 200;
  Index max_len = 512;
  Index warmup = 20;
  Index iters = 100;
  Index max_depth = 3;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::vector<Variant> selected_variants(const Common& c) {
  if (c.variants.empty()) return {Variant::Baseline, Variant::QBlock, Variant::ParallelTiled};
  std::vector<Variant> out;
  for (const auto& v : c.variants) out.push_back(parse_variant(v));
  return out;
}

/// Small built-in scenario set spanning the decode-share axis.
std::vector<ScenarioSpec> default_scenarios(std::uint64_t seed) {
  std::vector<ScenarioSpec> specs;
  const std::pair<Index, double> shapes[] = {{1, 1.0}, {4, 1.0}, {4, 0.5}, {4, 0.0}, {2, 0.0}};
  const Index lens[] = {2048, 512, 256, 128, 64};
  for (std::size_t i = 0; i < 5; ++i) {
    ScenarioSpec s;
    s.seed = seed + i;
    s.num_seqs = shapes[i].first;
    s.decode_share = shapes[i].second;
    s.max_seq_len = lens[i];
    s.heads = {8, 2, 64};
    s.label = "default" + std::to_string(i);
    specs.push_back(s);
  }
  return specs;
}

std::vector<ScenarioSpec> scenarios_from(const Common& c) {
  auto specs = c.scenarios.empty() ? default_scenarios(c.seed) : load_scenarios(c.scenarios);
  if (specs.empty()) throw Error(ErrorCode::NoData, "no scenarios");
  std::set<std::string> labels;
  for (const auto& s : specs) {
    if (!labels.insert(s.label).second) {
      throw Error(ErrorCode::ParseError, "duplicate scenario label '" + s.label + "'");
    }
  }
  return specs;
}

/// One configuration per variant that runs on any scenario.
KernelConfigPoint bench_point(Variant v, const ScenarioSpec& s) {
  switch (v) {
    case Variant::Baseline: return {v, s.kv_block_size, 1, 1, 0};
    case Variant::QBlock: return {v, 32, 16, 1, 0};
    case Variant::ParallelTiled: return {v, 32, 1, 4, 0};
  }
  return {};
}

std::vector<KernelConfigPoint> default_grid() {
  return {{Variant::Baseline, 16, 1, 1, 0},     {Variant::QBlock, 16, 16, 1, 0},
          {Variant::QBlock, 64, 16, 1, 0},      {Variant::QBlock, 32, 4, 1, 0},
          {Variant::ParallelTiled, 32, 1, 4, 0}, {Variant::ParallelTiled, 64, 1, 8, 0}};
}

int cmd_verify(const Common& c, WorkerPool& pool) {
  VerifyOptions opts;
  opts.pool = &pool;
  opts.poison = c.poison;
  if (!c.variants.empty()) {
    opts.runs.clear();
    for (const auto& v : c.variants) {
      opts.runs.push_back(v == "static" ? VerifyRun::StaticGrid
                                        : static_cast<VerifyRun>(parse_variant(v)));
    }
  }
  std::vector<VerifyCase> cases;
  if (!c.scenarios.empty()) {
    // A previously written repro file.
    std::ifstream in(c.scenarios);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + c.scenarios);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, e.what());
    }
    cases.push_back(verify_case_from_json(j.contains("case") ? j.at("case") : j));
  } else {
    cases = make_case_matrix(c.seed, c.cases, c.max_len);
  }

  const VerifyReport report = run_verify(cases, opts);
  std::cout << "cases: " << report.cases << "\n";
  for (VerifyRun r : opts.runs) {
    const auto k = static_cast<std::size_t>(r);
    std::cout << std::left << std::setw(16) << to_string(r) << std::right
              << " max_rel_err_vs_oracle=" << std::scientific << std::setprecision(3)
              << report.max_oracle_error[k] << " max_rel_err_cross=" << report.max_cross_error[k]
              << std::defaultfloat << "\n";
  }
  if (report.ok()) {
    std::cout << "PASS\n";
    return kOk;
  }
  const CaseFailure& f = report.failures.front();
  const fs::path repro = c.out.empty() ? fs::path("pagedattn_repro.json") : fs::path(c.out);
  nlohmann::json j{{"case", to_json(cases[f.case_index])},
                   {"case_index", f.case_index},
                   {"run", std::string(to_string(f.run))},
                   {"oracle_error", f.oracle_error},
                   {"cross_error", f.cross_error},
                   {"seed", c.seed},
                   {"poison", c.poison}};
  std::ofstream out(repro);
  if (!out || !(out << j.dump(2) << '\n')) throw Error(ErrorCode::IoError, "cannot write " + repro.string());
  std::cout << "FAIL: " << report.failures.size() << " mismatches; first in case " << f.case_index
            << " (" << to_string(f.run) << "), repro written to " << repro.string() << "\n";
  return kVerifyFailed;
}

int cmd_bench(const Common& c, WorkerPool& pool) {
  const auto specs = scenarios_from(c);
  const auto variants = selected_variants(c);
  BenchmarkOptions bo;
  bo.warmup = c.warmup;
  bo.iters = c.iters;
  bo.pool = &pool;

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!c.out.empty() && c.out != "-") {
    file.open(c.out);
    if (!file) throw Error(ErrorCode::IoError, "cannot write " + c.out);
    os = &file;
  }
  *os << "scenario_label,variant,tile_size,block_q,num_segments,num_instances,mean_us,p50_us,"
         "p95_us,checksum\n";
  for (const auto& spec : specs) {
    const Scenario sc = make_scenario(spec);
    std::optional<HeadTensor> reference;
    for (Variant v : variants) {
      const KernelConfigPoint p = bench_point(v, spec);
      if (!reference) reference = reference_attention(sc.data, config_for(sc, p));
      const TuningRecord r = run_microbenchmark(sc, p, bo, *reference);
      *os << r.label << ',' << to_string(p.variant) << ',' << p.tile_size << ',' << p.block_q << ','
          << p.num_segments << ',' << p.num_instances << ',' << std::fixed << std::setprecision(3)
          << r.latency.mean_us << ',' << r.latency.p50_us << ',' << r.latency.p95_us
          << std::defaultfloat << ',' << hex64(r.checksum) << '\n';
    }
  }
  os->flush();
  if (!*os) throw Error(ErrorCode::IoError, "write failed for " + c.out);
  return kOk;
}

int cmd_tune(const Common& c, WorkerPool& pool) {
  const fs::path records_path = c.out.empty() ? fs::path("pagedattn_records.ndjson") : fs::path(c.out);
  const fs::path tree_path = c.tree.empty() ? fs::path("pagedattn_tree.json") : fs::path(c.tree);
  const auto grid = c.grid.empty() ? default_grid() : load_grid(c.grid);
  const auto specs = scenarios_from(c);

  std::size_t cached = 0;
  if (fs::exists(records_path)) {
    std::set<std::pair<std::string, KernelConfigPoint>> have;
    for (const auto& r : load_records(records_path)) have.emplace(r.label, r.config);
    for (const auto& s : specs) {
      for (const auto& p : grid) cached += have.count({s.label, p});
    }
  }
  const std::size_t total = specs.size() * grid.size();
  std::vector<Scenario> scenarios;
  for (const auto& s : specs) scenarios.push_back(make_scenario(s));

  SweepOptions so;
  so.bench.warmup = c.warmup;
  so.bench.iters = c.iters;
  so.bench.pool = &pool;
  so.records_path = records_path;
  if (total > 0 && cached == total) {
    std::cerr << "all " << total << " records present in " << records_path.string()
              << ", sweep skipped\n";
  } else if (total > 0) {
    std::cerr << "measuring " << total - cached << " of " << total << " (scenario, config) pairs\n";
  }
  const auto records = sweep(scenarios, grid, so);
  const HeuristicTree tree = fit_decision_tree(records, c.max_depth);
  save_tree(tree_path, tree);
  std::cout << to_pseudocode(tree);
  std::cerr << "tree regret " << tree_regret(tree, records) << " us, best single config "
            << best_global_regret(records) << " us\n";
  return kOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::VerificationFailed: return kVerifyFailed;
    case ErrorCode::IoError: return kIo;
    default: return kUsage;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Paged attention reference engine"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", c.workers, "Worker threads (0: available parallelism)")
      ->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Check every kernel against the reference");
  verify->add_option("--variant", c.variants,
                     "Runs to check: baseline, qblock, parallel_tiled, static (default all)");
  verify->add_option("--scenarios", c.scenarios, "Replay a repro file instead of random cases");
  verify->add_option("--out", c.out, "Repro file written on mismatch")
      ->default_str("pagedattn_repro.json");
  verify->add_option("--cases", c.cases, "Number of random batches")->capture_default_str()->check(CLI::PositiveNumber);
  verify->add_option("--max-len", c.max_len, "Longest sequence")->capture_default_str()->check(CLI::Range(2, 1 << 20));
  verify->add_flag("--poison", c.poison, "Corrupt one output element (harness self-test)");

  auto* bench = app.add_subcommand("bench", "Time each variant on a set of scenarios");
  bench->add_option("--scenarios", c.scenarios, "Scenario JSON (object or array)");
  bench->add_option("--variant", c.variants, "Variants to time (default all)");
  bench->add_option("--out", c.out, "CSV output path (default stdout)");
  bench->add_option("--warmup", c.warmup)->capture_default_str()->check(CLI::NonNegativeNumber);
  bench->add_option("--iters", c.iters)->capture_default_str()->check(CLI::PositiveNumber);

  auto* tune = app.add_subcommand("tune", "Sweep a config grid and fit a selection tree");
  tune->add_option("--scenarios", c.scenarios, "Scenario JSON (object or array)");
  tune->add_option("--grid", c.grid, "JSON array of kernel configurations");
  tune->add_option("--out", c.out, "Records file (NDJSON)")->default_str("pagedattn_records.ndjson");
  tune->add_option("--tree", c.tree, "Tree output path")->default_str("pagedattn_tree.json");
  tune->add_option("--max-depth", c.max_depth)->capture_default_str()->check(CLI::NonNegativeNumber);
  tune->add_option("--warmup", c.warmup)->capture_default_str()->check(CLI::NonNegativeNumber);
  tune->add_option("--iters", c.iters)->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    WorkerPool pool(c.workers);
    if (*verify) return cmd_verify(c, pool);
    if (*bench) return cmd_bench(c, pool);
    return cmd_tune(c, pool);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
