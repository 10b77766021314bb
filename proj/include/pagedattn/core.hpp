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

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "pagedattn/error.hpp"

namespace pagedattn {

using Index = Eigen::Index;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major fp32 matrix. Q, K and V payloads all live in this type.
using MatrixF = RowMatrix<float>;
using VectorF = ColVector<float>;
using MaskVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Copies `data` into a rows x cols matrix, rejecting bad sizes and
/// non-finite values.
MatrixF make_matrix(Index rows, Index cols, std::span<const float> data);

/// Per-token, per-head vectors: a [tokens][heads][head_size] tensor stored as
/// a (tokens * heads) x head_size row-major matrix.
struct HeadTensor {
  Index tokens = 0;
  Index heads = 0;
  Index head_size = 0;
  MatrixF data;

  HeadTensor() = default;
  HeadTensor(Index tokens_, Index heads_, Index head_size_)
      : tokens(tokens_), heads(heads_), head_size(head_size_),
        data(MatrixF::Zero(tokens_ * heads_, head_size_)) {}

  Index row_index(Index token, Index head) const { return token * heads + head; }
  auto row(Index token, Index head) { return data.row(row_index(token, head)); }
  auto row(Index token, Index head) const { return data.row(row_index(token, head)); }
};

struct AttentionConfig {
  Index num_query_heads = 1;
  Index num_kv_heads = 1;
  Index head_size = 1;
  float scale = 1.0f;
  Index kv_block_size = 16;
  Index tile_size = 16;
  Index block_q = 1;

  /// Builds a validated configuration with scale = 1/sqrt(head_size).
  static AttentionConfig make(Index num_query_heads, Index num_kv_heads, Index head_size,
                              Index kv_block_size, Index tile_size, Index block_q);

  /// Throws InvalidConfig when an invariant does not hold.
  void validate() const;

  /// Query heads sharing one KV head.
  Index group_size() const { return num_query_heads / num_kv_heads; }
  /// Rows of a flattened Q-Block: BLOCK_Q tokens times the GQA group.
  Index block_m() const { return block_q * group_size(); }
};

struct SequenceMeta {
  Index context_len = 0;
  Index query_len = 0;

  Index seq_len() const { return context_len + query_len; }
  bool is_decode() const { return query_len == 1 && context_len > 0; }
  bool is_prefill() const { return context_len == 0; }

  friend bool operator==(const SequenceMeta&, const SequenceMeta&) = default;
};

struct BatchMeta {
  std::vector<SequenceMeta> seqs;
  /// Leading 0, then running sums of query lengths.
  std::vector<Index> cu_query_lens;
  /// Leading 0, then running sums of ceil(query_len / block_q).
  std::vector<Index> cu_q_blocks;
  Index num_decodes = 0;
  Index block_q = 1;

  Index num_seqs() const { return static_cast<Index>(seqs.size()); }
  Index total_query_len() const { return cu_query_lens.back(); }
  Index total_q_blocks() const { return cu_q_blocks.back(); }
  bool decode_only() const { return num_decodes == num_seqs(); }
};

BatchMeta build_batch_meta(std::span<const SequenceMeta> seqs, const AttentionConfig& cfg);

/// Binary search for the unique i with cu[i] <= global_idx < cu[i + 1].
Index seq_index_lookup(std::span<const Index> cu, Index global_idx);

Index kv_head_for_query_head(Index query_head, const AttentionConfig& cfg);

/// max_i |a_i - e_i| / max(1, |e_i|): relative for large entries, absolute
/// near zero. NaN anywhere yields NaN.
double max_relative_error(const MatrixF& actual, const MatrixF& expected);

inline Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

}  // namespace pagedattn
