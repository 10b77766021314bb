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
#include <mutex>
#include <span>
#include <vector>

#include "pagedattn/core.hpp"

namespace pagedattn {

/// Physical block ids backing one sequence. Logical token t lives in
/// blocks[t / block_size] at slot t % block_size.
struct BlockTable {
  std::vector<Index> blocks;
  Index num_tokens = 0;
};

/// K and V rows for one tile of keys; rows past valid_len are zero with
/// mask false.
struct KvTile {
  MatrixF k;
  MatrixF v;
  MaskVector mask;
};

/// Block-granular K/V storage addressed through block tables. Storage layout
/// is [block][kv_head][slot][dim] for K and V separately, so the rows of one
/// head inside a block are contiguous.
///
/// Allocation and freeing are serialized internally. Writes must be
/// single-owner per sequence, and the cache is read-only while kernels run.
class PagedKvCache {
 public:
  PagedKvCache(Index num_blocks, Index block_size, Index num_kv_heads, Index head_size);

  PagedKvCache(PagedKvCache&& other) noexcept;
  PagedKvCache& operator=(PagedKvCache&& other) noexcept;
  PagedKvCache(const PagedKvCache&) = delete;
  PagedKvCache& operator=(const PagedKvCache&) = delete;

  Index num_blocks() const { return num_blocks_; }
  Index block_size() const { return block_size_; }
  Index num_kv_heads() const { return num_kv_heads_; }
  Index head_size() const { return head_size_; }
  Index free_block_count() const;

  /// Takes ceil(seq_len / block_size) blocks off the free list (LIFO).
  BlockTable allocate_sequence(Index seq_len);
  /// Returns the table's blocks to the free list and clears their written
  /// flags. The table is emptied.
  void free_sequence(BlockTable& table);

  void write_kv(const BlockTable& table, Index token_pos, Index kv_head,
                std::span<const float> k_vec, std::span<const float> v_vec);

  /// Copies of the K and V rows stored for one token.
  std::pair<VectorF, VectorF> read_kv(const BlockTable& table, Index token_pos,
                                      Index kv_head) const;

  KvTile read_kv_tile(const BlockTable& table, Index kv_head, Index tile_start,
                      Index tile_len, Index valid_len) const;

  /// Allocation-free variant of read_kv_tile for kernel inner loops. `k` and
  /// `v` must have at least tile_len rows; returns the number of valid rows.
  /// Rows [valid, tile_len) are zero-filled.
  Index read_kv_tile_into(const BlockTable& table, Index kv_head, Index tile_start,
                          Index tile_len, Index valid_len, Eigen::Ref<MatrixF> k,
                          Eigen::Ref<MatrixF> v) const;

  /// Flat offset of (block, kv_head, slot, 0) in the K/V stores.
  std::size_t physical_offset(Index block, Index kv_head, Index slot) const {
    return static_cast<std::size_t>(((block * num_kv_heads_ + kv_head) * block_size_ + slot) *
                                    head_size_);
  }

  /// Physical block and slot holding logical token `token_pos`.
  std::pair<Index, Index> locate(const BlockTable& table, Index token_pos) const;

 private:
  Index num_blocks_;
  Index block_size_;
  Index num_kv_heads_;
  Index head_size_;
  std::vector<float> k_store_;
  std::vector<float> v_store_;
  // One flag per (block, kv_head, slot).
  std::vector<std::uint8_t> written_;
  std::vector<Index> free_list_;
  mutable std::mutex alloc_mutex_;
};

}  // namespace pagedattn
