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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pagedattn/core.hpp"
#include "pagedattn/kvcache.hpp"

namespace pagedattn {

enum class LengthDistribution { Uniform, Fixed };

/// Defaults follow the Llama-3-8B attention shape.
struct HeadConfig {
  Index num_query_heads = 32;
  Index num_kv_heads = 8;
  Index head_size = 128;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct ScenarioSpec {
  std::uint64_t seed = 0;
  Index num_seqs = 1;
  Index max_seq_len = 128;
  double decode_share = 0.0;
  LengthDistribution length_distribution = LengthDistribution::Uniform;
  HeadConfig heads;
  Index kv_block_size = 16;
  std::string label;
};

/// Sequences plus dense Q, K and V payloads. keys[i] / values[i] hold every
/// token (context and query) of sequence i for all KV heads.
struct GeneratedBatch {
  std::vector<SequenceMeta> seqs;
  HeadConfig heads;
  HeadTensor q;
  std::vector<HeadTensor> keys;
  std::vector<HeadTensor> values;
};

/// Number of decode sequences implied by decode_share (rounded to nearest).
Index decode_count(const ScenarioSpec& spec);

/// Deterministic in spec.seed. Decode sequences come first and have
/// query_len 1 and context_len >= 1; prefill sequences have context_len 0.
/// Payload values are uniform in [-1, 1].
GeneratedBatch generate(const ScenarioSpec& spec);

/// Payloads for an explicit list of sequences.
GeneratedBatch generate_payloads(std::span<const SequenceMeta> seqs, const HeadConfig& heads,
                                 std::uint64_t seed);

/// A batch laid out in a paged cache, ready for the kernels.
struct Workload {
  BatchMeta batch;
  PagedKvCache cache;
  std::vector<BlockTable> tables;
};

/// Allocates exactly as many blocks as the batch needs plus `spare_blocks`,
/// then writes every K/V row through the block tables.
Workload materialize(const GeneratedBatch& gen, const AttentionConfig& cfg, Index spare_blocks = 0);

/// Attention computed directly from the dense payloads (no cache, no tiling),
/// evaluated in double and rounded to fp32.
HeadTensor reference_attention(const GeneratedBatch& gen, const AttentionConfig& cfg);

AttentionConfig make_config(const HeadConfig& heads, Index kv_block_size, Index tile_size,
                            Index block_q);

void to_json(nlohmann::json& j, const ScenarioSpec& spec);
/// Missing fields keep their defaults; bad values throw ParseError.
void from_json(const nlohmann::json& j, ScenarioSpec& spec);

}  // namespace pagedattn
