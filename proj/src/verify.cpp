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

#include "pagedattn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pagedattn {

std::string_view to_string(VerifyRun r) noexcept {
  switch (r) {
    case VerifyRun::Baseline: return "baseline";
    case VerifyRun::QBlock: return "qblock";
    case VerifyRun::ParallelTiled: return "parallel_tiled";
    case VerifyRun::StaticGrid: return "static_grid";
  }
  return "unknown";
}

namespace {

// Log-uniform in [1, hi] so most sequences stay short while the range is
// still covered.
Index log_uniform(std::mt19937_64& rng, Index hi) {
  std::uniform_real_distribution<double> u(0.0, std::log(static_cast<double>(hi) + 1.0));
  return std::clamp<Index>(static_cast<Index>(std::exp(u(rng))), 1, hi);
}

}  // namespace

std::vector<VerifyCase> make_case_matrix(std::uint64_t seed, Index count, Index max_len) {
  static constexpr std::pair<Index, Index> kHeads[] = {{8, 8}, {32, 8}, {16, 1}};
  static constexpr Index kHeadSizes[] = {16, 32, 64};
  static constexpr Index kBlocks[] = {16, 80};
  static constexpr Index kTiles[] = {16, 32, 64};
  static constexpr Index kBlockQ[] = {1, 2, 4, 16};
  static constexpr double kShares[] = {0.0, 0.5, 1.0};

  std::mt19937_64 rng(seed);
  std::vector<VerifyCase> cases;
  cases.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    VerifyCase c;
    c.seed = rng();
    const auto [qh, kvh] = kHeads[i % 3];
    c.heads = {qh, kvh, kHeadSizes[(i / 3) % 3]};
    c.kv_block_size = kBlocks[(i / 9) % 2];
    c.tile_size = kTiles[(i / 18) % 3];
    c.block_q = kBlockQ[rng() % 4];
    c.num_segments = 2 + static_cast<Index>(rng() % 7);
    c.static_instances = 1 + static_cast<Index>(rng() % 64);
    const double share = kShares[i % 3 == 0 ? (i / 3) % 3 : rng() % 3];
    const Index n = 1 + static_cast<Index>(rng() % 4);
    for (Index s = 0; s < n; ++s) {
      const bool decode = (static_cast<double>(s) + 0.5) / static_cast<double>(n) < share;
      SequenceMeta m;
      if (decode) {
        m.context_len = std::max<Index>(1, log_uniform(rng, max_len - 1));
        m.query_len = 1;
      } else {
        // Mostly plain prefills, sometimes a chunk appended to a context.
        m.context_len = rng() % 4 == 0 ? log_uniform(rng, max_len / 2) : 0;
        m.query_len = std::max<Index>(1, std::min(log_uniform(rng, max_len), max_len - m.context_len));
      }
      c.seqs.push_back(m);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

CaseOutputs run_case(const VerifyCase& c, const std::vector<VerifyRun>& runs,
                     const ExecutionOptions& exec) {
  const GeneratedBatch gen = generate_payloads(c.seqs, c.heads, c.seed);
  const AttentionConfig cfg = make_config(c.heads, c.kv_block_size, c.tile_size, c.block_q);
  // Baseline tiles are single blocks; the segmented variant needs one-token Q-Blocks.
  const AttentionConfig base_cfg = make_config(c.heads, c.kv_block_size, c.kv_block_size, 1);
  const AttentionConfig pt_cfg = make_config(c.heads, c.kv_block_size, c.tile_size, 1);

  CaseOutputs out;
  out.reference = reference_attention(gen, cfg);
  out.outputs.resize(4);
  std::optional<Workload> w_main, w_one;
  auto main = [&]() -> const Workload& {
    if (!w_main) w_main.emplace(materialize(gen, cfg));
    return *w_main;
  };
  auto one = [&]() -> const Workload& {
    if (!w_one) w_one.emplace(materialize(gen, pt_cfg));
    return *w_one;
  };
  for (VerifyRun r : runs) {
    auto& slot = out.outputs[static_cast<std::size_t>(r)];
    switch (r) {
      case VerifyRun::Baseline: {
        const Workload& w = one();
        slot = baseline_attention(w.batch, w.cache, w.tables, gen.q, base_cfg, exec);
        break;
      }
      case VerifyRun::QBlock: {
        const Workload& w = main();
        slot = qblock_attention(w.batch, w.cache, w.tables, gen.q, cfg, exec);
        break;
      }
      case VerifyRun::ParallelTiled: {
        const Workload& w = one();
        slot = parallel_tiled_attention(w.batch, w.cache, w.tables, gen.q, pt_cfg, c.num_segments,
                                        exec);
        break;
      }
      case VerifyRun::StaticGrid: {
        const Workload& w = main();
        slot = static_grid_run(Variant::QBlock, w.batch, w.cache, w.tables, gen.q, cfg,
                               c.static_instances, 1, exec);
        break;
      }
    }
  }
  return out;
}

VerifyReport run_verify(const std::vector<VerifyCase>& cases, const VerifyOptions& opts) {
  VerifyReport report;
  report.cases = static_cast<Index>(cases.size());
  const ExecutionOptions exec{opts.pool, nullptr};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    CaseOutputs co = run_case(cases[i], opts.runs, exec);
    auto& qb = co.outputs[static_cast<std::size_t>(VerifyRun::QBlock)];
    if (opts.poison && qb) qb->data(0, 0) += 0.5f;
    const auto& anchor = qb ? qb : co.outputs[static_cast<std::size_t>(VerifyRun::Baseline)];
    for (VerifyRun r : opts.runs) {
      const std::size_t k = static_cast<std::size_t>(r);
      const MatrixF& got = co.outputs[k]->data;
      double oracle = max_relative_error(got, co.reference.data);
      double cross = anchor ? max_relative_error(got, anchor->data) : 0.0;
      const bool pass = oracle <= opts.oracle_tolerance && cross <= opts.cross_tolerance;
      if (std::isnan(oracle)) oracle = INFINITY;
      if (std::isnan(cross)) cross = INFINITY;
      report.max_oracle_error[k] = std::max(report.max_oracle_error[k], oracle);
      report.max_cross_error[k] = std::max(report.max_cross_error[k], cross);
      if (!pass) report.failures.push_back({i, r, oracle, cross});
    }
  }
  return report;
}

nlohmann::json to_json(const VerifyCase& c) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& s : c.seqs) seqs.push_back({{"context_len", s.context_len}, {"query_len", s.query_len}});
  return {{"seed", c.seed},
          {"num_query_heads", c.heads.num_query_heads},
          {"num_kv_heads", c.heads.num_kv_heads},
          {"head_size", c.heads.head_size},
          {"kv_block_size", c.kv_block_size},
          {"tile_size", c.tile_size},
          {"block_q", c.block_q},
          {"num_segments", c.num_segments},
          {"static_instances", c.static_instances},
          {"seqs", seqs}};
}

VerifyCase verify_case_from_json(const nlohmann::json& j) {
  try {
    VerifyCase c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.heads = {j.at("num_query_heads").get<Index>(), j.at("num_kv_heads").get<Index>(),
               j.at("head_size").get<Index>()};
    c.kv_block_size = j.at("kv_block_size").get<Index>();
    c.tile_size = j.at("tile_size").get<Index>();
    c.block_q = j.at("block_q").get<Index>();
    c.num_segments = j.at("num_segments").get<Index>();
    c.static_instances = j.at("static_instances").get<Index>();
    for (const auto& s : j.at("seqs")) {
      c.seqs.push_back({s.at("context_len").get<Index>(), s.at("query_len").get<Index>()});
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace pagedattn
