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

#pragma once

// Randomized oracle-equivalence suite shared by the CLI and the acceptance
// tests.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagedattn/kernels.hpp"
#include "pagedattn/scenario_gen.hpp"

namespace pagedattn {

/// One randomized batch and the geometry it is checked under.
struct VerifyCase {
  std::uint64_t seed = 0;  // payload seed
  HeadConfig heads;
  Index kv_block_size = 16;
  Index tile_size = 16;
  Index block_q = 1;
  Index num_segments = 2;
  Index static_instances = 3;
  std::vector<SequenceMeta> seqs;
};

/// Kernel runs checked for every case. The static-grid entry runs QBlock on
/// case.static_instances instances.
enum class VerifyRun { Baseline = 0, QBlock = 1, ParallelTiled = 2, StaticGrid = 3 };
inline constexpr VerifyRun kAllRuns[] = {VerifyRun::Baseline, VerifyRun::QBlock,
                                         VerifyRun::ParallelTiled, VerifyRun::StaticGrid};
std::string_view to_string(VerifyRun r) noexcept;

/// Mixed prefill/decode batches with ragged lengths in [1, max_len], head
/// configs {(8,8), (32,8), (16,1)}, block sizes {16, 80} and tiles
/// {16, 32, 64}. Deterministic in `seed`.
std::vector<VerifyCase> make_case_matrix(std::uint64_t seed, Index count, Index max_len = 512);

struct VerifyOptions {
  std::vector<VerifyRun> runs{std::begin(kAllRuns), std::end(kAllRuns)};
  double oracle_tolerance = 1e-4;
  double cross_tolerance = 1e-5;
  WorkerPool* pool = nullptr;
  /// Test hook: corrupts one output element of every QBlock run.
  bool poison = false;
};

struct CaseFailure {
  std::size_t case_index = 0;
  VerifyRun run = VerifyRun::QBlock;
  double oracle_error = 0.0;
  double cross_error = 0.0;
};

struct VerifyReport {
  Index cases = 0;
  /// Indexed by VerifyRun; NaN-free maxima over all cases.
  double max_oracle_error[4] = {0, 0, 0, 0};
  double max_cross_error[4] = {0, 0, 0, 0};
  std::vector<CaseFailure> failures;
  bool ok() const { return failures.empty(); }
};

/// Runs every case. Cross-variant error is measured against the QBlock
/// output of the same case (baseline is the reference when QBlock is not
/// among the runs).
VerifyReport run_verify(const std::vector<VerifyCase>& cases, const VerifyOptions& opts);

/// Output of one run for one case, plus the fp64 reference.
struct CaseOutputs {
  HeadTensor reference;
  std::vector<std::optional<HeadTensor>> outputs;  // indexed by VerifyRun
};
CaseOutputs run_case(const VerifyCase& c, const std::vector<VerifyRun>& runs,
                     const ExecutionOptions& exec = {});

nlohmann::json to_json(const VerifyCase& c);
VerifyCase verify_case_from_json(const nlohmann::json& j);

}  // namespace pagedattn
