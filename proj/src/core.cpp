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

#include "pagedattn/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pagedattn {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::InvalidSequence: return "InvalidSequence";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::OutOfCacheMemory: return "OutOfCacheMemory";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyAttentionRow: return "EmptyAttentionRow";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NoData: return "NoData";
    case ErrorCode::VerificationFailed: return "VerificationFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

MatrixF make_matrix(Index rows, Index cols, std::span<const float> data) {
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw Error(ErrorCode::ShapeError, "data length " + std::to_string(data.size()) +
                                           " != " + std::to_string(rows) + "x" +
                                           std::to_string(cols));
  }
  if (!std::all_of(data.begin(), data.end(), [](float x) { return std::isfinite(x); })) {
    throw Error(ErrorCode::NonFiniteInput, "matrix contains NaN or Inf");
  }
  return Eigen::Map<const MatrixF>(data.data(), rows, cols);
}

AttentionConfig AttentionConfig::make(Index num_query_heads, Index num_kv_heads,
                                      Index head_size, Index kv_block_size,
                                      Index tile_size, Index block_q) {
  AttentionConfig cfg;
  cfg.num_query_heads = num_query_heads;
  cfg.num_kv_heads = num_kv_heads;
  cfg.head_size = head_size;
  cfg.kv_block_size = kv_block_size;
  cfg.tile_size = tile_size;
  cfg.block_q = block_q;
  if (head_size >= 1) {
    cfg.scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(head_size)));
  }
  cfg.validate();
  return cfg;
}

void AttentionConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (num_query_heads < 1 || num_kv_heads < 1) fail("head counts must be >= 1");
  if (num_query_heads % num_kv_heads != 0) {
    fail("num_query_heads must be a multiple of num_kv_heads");
  }
  if (head_size < 1) fail("head_size must be >= 1");
  if (kv_block_size < 1 || tile_size < 1 || block_q < 1) {
    fail("kv_block_size, tile_size and block_q must be >= 1");
  }
  const double expected = 1.0 / std::sqrt(static_cast<double>(head_size));
  if (std::abs(static_cast<double>(scale) - expected) > 1e-7) {
    fail("scale must equal 1/sqrt(head_size)");
  }
}

BatchMeta build_batch_meta(std::span<const SequenceMeta> seqs, const AttentionConfig& cfg) {
  if (seqs.empty()) throw Error(ErrorCode::EmptyBatch, "batch has no sequences");
  if (cfg.block_q < 1) throw Error(ErrorCode::InvalidConfig, "block_q must be >= 1");

  BatchMeta meta;
  meta.block_q = cfg.block_q;
  meta.seqs.assign(seqs.begin(), seqs.end());
  meta.cu_query_lens.reserve(seqs.size() + 1);
  meta.cu_q_blocks.reserve(seqs.size() + 1);
  meta.cu_query_lens.push_back(0);
  meta.cu_q_blocks.push_back(0);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const SequenceMeta& s = seqs[i];
    if (s.query_len < 1 || s.context_len < 0) {
      throw Error(ErrorCode::InvalidSequence,
                  "sequence " + std::to_string(i) + " has query_len " +
                      std::to_string(s.query_len) + ", context_len " +
                      std::to_string(s.context_len));
    }
    meta.cu_query_lens.push_back(meta.cu_query_lens.back() + s.query_len);
    meta.cu_q_blocks.push_back(meta.cu_q_blocks.back() + ceil_div(s.query_len, cfg.block_q));
    if (s.is_decode()) ++meta.num_decodes;
  }
  return meta;
}

Index seq_index_lookup(std::span<const Index> cu, Index global_idx) {
  if (cu.size() < 2 || global_idx < 0 || global_idx >= cu.back()) {
    throw Error(ErrorCode::IndexOutOfRange,
                "index " + std::to_string(global_idx) + " outside cumulative range");
  }
  auto it = std::upper_bound(cu.begin(), cu.end(), global_idx);
  return static_cast<Index>(it - cu.begin()) - 1;
}

double max_relative_error(const MatrixF& actual, const MatrixF& expected) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    throw Error(ErrorCode::ShapeError, "compared matrices differ in shape");
  }
  double worst = 0.0;
  for (Index i = 0; i < actual.size(); ++i) {
    const double a = actual.data()[i];
    const double e = expected.data()[i];
    const double err = std::abs(a - e) / std::max(1.0, std::abs(e));
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

Index kv_head_for_query_head(Index query_head, const AttentionConfig& cfg) {
  if (query_head < 0 || query_head >= cfg.num_query_heads) {
    throw Error(ErrorCode::IndexOutOfRange, "query head " + std::to_string(query_head));
  }
  return query_head / cfg.group_size();
}

}  // namespace pagedattn
