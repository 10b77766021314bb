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

// Offline microbenchmark sweeps and the decision-tree heuristics exported
// from them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagedattn/core.hpp"
#include "pagedattn/kernels.hpp"
#include "pagedattn/scenario_gen.hpp"

namespace pagedattn {

/// One point of the kernel configuration space. num_instances == 0 selects
/// the dynamic launch grid; any positive value runs a static grid of that
/// many instances.
struct KernelConfigPoint {
  Variant variant = Variant::QBlock;
  Index tile_size = 16;
  Index block_q = 16;
  Index num_segments = 1;
  Index num_instances = 0;

  friend bool operator==(const KernelConfigPoint&, const KernelConfigPoint&) = default;
  friend auto operator<=>(const KernelConfigPoint&, const KernelConfigPoint&) = default;
};

/// Structural checks; ParallelTiled needs block_q == 1 and >= 2 segments.
void validate(const KernelConfigPoint& point);

/// block_q used when a ParallelTiled leaf is demoted to QBlock for a batch
/// that is not decode-only.
inline constexpr Index kFallbackBlockQ = 16;

enum class Feature { DecodeShare = 0, MaxSeqLen = 1, TotalTokens = 2, NumSeqs = 3 };
inline constexpr Feature kAllFeatures[] = {Feature::DecodeShare, Feature::MaxSeqLen,
                                           Feature::TotalTokens, Feature::NumSeqs};

std::string_view to_string(Feature f) noexcept;
Feature parse_feature(std::string_view name);

struct ScenarioFeatures {
  Index num_seqs = 0;
  Index max_seq_len = 0;
  Index total_tokens = 0;  // sum of sequence lengths
  double decode_share = 0.0;

  double get(Feature f) const;
  friend bool operator==(const ScenarioFeatures&, const ScenarioFeatures&) = default;
};

ScenarioFeatures features_of(std::span<const SequenceMeta> seqs);
ScenarioFeatures features_of(const BatchMeta& batch);

/// A benchmark scenario: the spec it came from and the generated batch.
struct Scenario {
  ScenarioSpec spec;
  GeneratedBatch data;

  const std::string& label() const { return spec.label; }
  double decode_share() const;
};

Scenario make_scenario(const ScenarioSpec& spec);

struct LatencyStats {
  double mean_us = 0.0;
  double p50_us = 0.0;
  double p95_us = 0.0;
};

/// Mean plus nearest-rank 50th and 95th percentiles.
LatencyStats summarize_latencies(std::vector<double> samples_us);

struct TuningRecord {
  std::string label;
  ScenarioFeatures features;
  KernelConfigPoint config;
  LatencyStats latency;
  Index iterations = 0;
  std::uint64_t checksum = 0;
};

struct BenchmarkOptions {
  Index warmup = 20;
  Index iters = 100;
  WorkerPool* pool = nullptr;
  double tolerance = 1e-4;
};

/// Throws InvalidConfig if `point` cannot run `scenario`.
AttentionConfig config_for(const Scenario& scenario, const KernelConfigPoint& point);

/// Executes one configuration on a materialized workload.
HeadTensor run_kernel(const KernelConfigPoint& point, const Workload& workload,
                      const HeadTensor& q, const AttentionConfig& cfg,
                      const ExecutionOptions& exec = {});

/// FNV-1a over the bit patterns of the output.
std::uint64_t output_checksum(const MatrixF& out);

/// Checksum of `out` after snapping every element that lies within `tol`
/// (in the max_relative_error sense) of `reference` onto the reference value.
/// Equal to output_checksum(reference) iff the output verifies.
std::uint64_t verified_checksum(const MatrixF& out, const MatrixF& reference, double tol);

/// Validates the kernel output against `reference` once, then times
/// warmup + iters runs and reports statistics over the last iters.
/// Throws VerificationFailed on a numerical mismatch.
TuningRecord run_microbenchmark(const Scenario& scenario, const KernelConfigPoint& point,
                                const BenchmarkOptions& opts, const HeadTensor& reference);
TuningRecord run_microbenchmark(const Scenario& scenario, const KernelConfigPoint& point,
                                const BenchmarkOptions& opts = {});

struct SweepOptions {
  BenchmarkOptions bench;
  /// NDJSON records file. Existing (label, config) pairs are reused and new
  /// records are appended as they complete.
  std::optional<std::filesystem::path> records_path;
};

/// One record per (scenario, config) pair, in scenario-major order.
std::vector<TuningRecord> sweep(std::span<const Scenario> scenarios,
                                std::span<const KernelConfigPoint> grid,
                                const SweepOptions& opts = {});

/// Fastest record per scenario label. Ties go to the smaller tile size, then
/// the lower variant ordinal.
std::map<std::string, TuningRecord> best_per_scenario(std::span<const TuningRecord> records);

/// If-else tree over scenario features. Internal nodes send feature < threshold
/// to `lt` and everything else to `ge`.
class HeuristicTree {
 public:
  struct Node {
    bool leaf = true;
    Feature feature = Feature::DecodeShare;
    double threshold = 0.0;
    std::size_t lt = 0;
    std::size_t ge = 0;
    KernelConfigPoint config;
  };

  HeuristicTree() = default;
  explicit HeuristicTree(KernelConfigPoint single_leaf);

  const KernelConfigPoint& evaluate(const ScenarioFeatures& f) const;
  Index depth() const;
  std::size_t root() const { return 0; }
  const std::vector<Node>& nodes() const { return nodes_; }

  std::size_t add_leaf(const KernelConfigPoint& config);
  std::size_t add_split(Feature feature, double threshold, std::size_t lt, std::size_t ge);
  /// Turns node `index` (a placeholder leaf) into a split.
  void set_split(std::size_t index, Feature feature, double threshold, std::size_t lt,
                 std::size_t ge);

  /// Checks totality: every internal node has two existing children and
  /// the node graph is a finite tree rooted at 0.
  void validate() const;

 private:
  std::vector<Node> nodes_;
};

/// Greedy top-down fit. Each node's leaf is the configuration with the least
/// total latency regret over the scenarios reaching it (ties: the config that
/// is best for most of them, then config order); a node is split on the
/// feature/threshold pair with the largest strict regret reduction.
HeuristicTree fit_decision_tree(std::span<const TuningRecord> records, Index max_depth);

/// Total regret (sum over scenarios of chosen latency minus best latency).
/// A configuration that was not measured for a scenario costs twice that
/// scenario's slowest measured latency.
double tree_regret(const HeuristicTree& tree, std::span<const TuningRecord> records);
double config_regret(const KernelConfigPoint& config, std::span<const TuningRecord> records);
/// Lowest config_regret over every configuration present in `records`.
double best_global_regret(std::span<const TuningRecord> records);

/// Leaf lookup; a ParallelTiled leaf is only honored for decode-only
/// batches, otherwise QBlock with the same tile size is returned.
KernelConfigPoint select_kernel(const HeuristicTree& tree, const BatchMeta& batch);

/// Indented if/else rendering of the tree.
std::string to_pseudocode(const HeuristicTree& tree);

// Serialization.
nlohmann::json to_json(const KernelConfigPoint& p);
KernelConfigPoint config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TuningRecord& r);
TuningRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HeuristicTree& tree);
HeuristicTree tree_from_json(const nlohmann::json& j);

std::vector<TuningRecord> load_records(const std::filesystem::path& path);
void append_record(const std::filesystem::path& path, const TuningRecord& record);
void save_tree(const std::filesystem::path& path, const HeuristicTree& tree);
HeuristicTree load_tree(const std::filesystem::path& path);
std::vector<KernelConfigPoint> load_grid(const std::filesystem::path& path);
std::vector<ScenarioSpec> load_scenarios(const std::filesystem::path& path);

}  // namespace pagedattn
