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

// Paged attention kernels executed as grids of program instances.
//
//   baseline       one instance per (query token, query head); tiles are
//                  exactly one KV cache block.
//   qblock         one instance per (Q-Block, KV head). A Q-Block flattens
//                  BLOCK_Q query tokens times the query heads of one KV head
//                  into BLOCK_M rows, token-major and head-minor:
//                  row r -> token r / group, head kv_head * group + r % group.
//   parallel_tiled one instance per (Q-Block, KV head, segment) computes a
//                  partial softmax state over a contiguous range of tiles; a
//                  second launch over (Q-Block, KV head) merges segments.
//
// Every instance writes a disjoint set of output rows and processes keys in
// a fixed order, so results do not depend on worker count or scheduling.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pagedattn/core.hpp"
#include "pagedattn/kvcache.hpp"
#include "pagedattn/worker_pool.hpp"

namespace pagedattn {

enum class Variant { Baseline = 0, QBlock = 1, ParallelTiled = 2 };

std::string_view to_string(Variant v) noexcept;
/// Accepts "baseline", "qblock", "parallel_tiled"; throws ParseError.
Variant parse_variant(std::string_view name);

enum class GridKind { PrefillBaseline, DecodeBaseline, QBlock, ParallelTiled, Static };

struct LaunchGrid {
  std::array<Index, 3> dims{1, 1, 1};
  int rank = 1;
  GridKind kind = GridKind::Static;

  Index size() const { return dims[0] * dims[1] * dims[2]; }
};

LaunchGrid baseline_grid(const BatchMeta& batch, const AttentionConfig& cfg);
LaunchGrid qblock_grid(const BatchMeta& batch, const AttentionConfig& cfg);
LaunchGrid parallel_tiled_grid(const BatchMeta& batch, const AttentionConfig& cfg,
                               Index num_segments);
LaunchGrid static_grid(Index num_instances);

struct QBlockDescriptor {
  Index seq_index = 0;
  Index q_block_in_seq = 0;
  /// First query token of the block, relative to the sequence's query.
  Index q_token_start = 0;
  /// (query token within the sequence's query, query head) for every valid
  /// row, in flattened row order. Padding rows are omitted.
  std::vector<std::pair<Index, Index>> rows;
  Index kv_head = 0;
};

QBlockDescriptor describe_q_block(const BatchMeta& batch, const AttentionConfig& cfg,
                                  Index q_block_index, Index kv_head);

struct SegmentRange {
  Index start_tile = 0;
  Index tile_count = 0;

  friend bool operator==(const SegmentRange&, const SegmentRange&) = default;
};

/// Contiguous, balanced split: the first num_tiles % num_segments segments
/// get one extra tile.
std::vector<SegmentRange> assign_tiles_to_segments(Index num_tiles, Index num_segments);

/// Per-instance record of a launch, used to check grid accounting and that
/// idle instances never write.
struct LaunchTrace {
  struct Phase {
    std::vector<std::vector<Index>> items;  // work items per instance
    std::vector<Index> writes;              // rows written per instance
  };
  std::vector<Phase> phases;
};

struct ExecutionOptions {
  WorkerPool* pool = nullptr;  // nullptr runs serially
  LaunchTrace* trace = nullptr;
};

HeadTensor baseline_attention(const BatchMeta& batch, const PagedKvCache& cache,
                              std::span<const BlockTable> tables, const HeadTensor& q,
                              const AttentionConfig& cfg, const ExecutionOptions& exec = {});

HeadTensor qblock_attention(const BatchMeta& batch, const PagedKvCache& cache,
                            std::span<const BlockTable> tables, const HeadTensor& q,
                            const AttentionConfig& cfg, const ExecutionOptions& exec = {});

HeadTensor parallel_tiled_attention(const BatchMeta& batch, const PagedKvCache& cache,
                                    std::span<const BlockTable> tables, const HeadTensor& q,
                                    const AttentionConfig& cfg, Index num_segments,
                                    const ExecutionOptions& exec = {});

/// Runs `variant` on exactly num_instances program instances. Instance w
/// handles work items w, w + num_instances, ...; instances with nothing to
/// do return without touching memory. num_segments is used only by
/// ParallelTiled.
HeadTensor static_grid_run(Variant variant, const BatchMeta& batch, const PagedKvCache& cache,
                           std::span<const BlockTable> tables, const HeadTensor& q,
                           const AttentionConfig& cfg, Index num_instances,
                           Index num_segments = 1, const ExecutionOptions& exec = {});

/// Worker pool size minus one, at least 1.
Index default_static_instances(const WorkerPool* pool);

}  // namespace pagedattn
