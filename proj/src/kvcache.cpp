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

#include "pagedattn/kvcache.hpp"

#include <algorithm>
#include <string>

namespace pagedattn {

PagedKvCache::PagedKvCache(Index num_blocks, Index block_size, Index num_kv_heads,
                           Index head_size)
    : num_blocks_(num_blocks),
      block_size_(block_size),
      num_kv_heads_(num_kv_heads),
      head_size_(head_size) {
  if (num_blocks < 0 || block_size < 1 || num_kv_heads < 1 || head_size < 1) {
    throw Error(ErrorCode::InvalidConfig, "invalid KV cache geometry");
  }
  const auto slots = static_cast<std::size_t>(num_blocks * num_kv_heads * block_size);
  k_store_.assign(slots * static_cast<std::size_t>(head_size), 0.0f);
  v_store_.assign(slots * static_cast<std::size_t>(head_size), 0.0f);
  written_.assign(slots, 0);
  // Popping from the back hands out block 0 first.
  free_list_.resize(static_cast<std::size_t>(num_blocks));
  for (Index b = 0; b < num_blocks; ++b) free_list_[static_cast<std::size_t>(b)] = num_blocks - 1 - b;
}

PagedKvCache::PagedKvCache(PagedKvCache&& other) noexcept {
  std::lock_guard lock(other.alloc_mutex_);
  num_blocks_ = other.num_blocks_;
  block_size_ = other.block_size_;
  num_kv_heads_ = other.num_kv_heads_;
  head_size_ = other.head_size_;
  k_store_ = std::move(other.k_store_);
  v_store_ = std::move(other.v_store_);
  written_ = std::move(other.written_);
  free_list_ = std::move(other.free_list_);
}

PagedKvCache& PagedKvCache::operator=(PagedKvCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(alloc_mutex_, other.alloc_mutex_);
    num_blocks_ = other.num_blocks_;
    block_size_ = other.block_size_;
    num_kv_heads_ = other.num_kv_heads_;
    head_size_ = other.head_size_;
    k_store_ = std::move(other.k_store_);
    v_store_ = std::move(other.v_store_);
    written_ = std::move(other.written_);
    free_list_ = std::move(other.free_list_);
  }
  return *this;
}

Index PagedKvCache::free_block_count() const {
  std::lock_guard lock(alloc_mutex_);
  return static_cast<Index>(free_list_.size());
}

BlockTable PagedKvCache::allocate_sequence(Index seq_len) {
  if (seq_len < 1) throw Error(ErrorCode::InvalidSequence, "seq_len must be >= 1");
  const Index needed = ceil_div(seq_len, block_size_);
  std::lock_guard lock(alloc_mutex_);
  if (needed > static_cast<Index>(free_list_.size())) {
    throw Error(ErrorCode::OutOfCacheMemory,
                "need " + std::to_string(needed) + " blocks, " +
                    std::to_string(free_list_.size()) + " free");
  }
  BlockTable table;
  table.num_tokens = seq_len;
  table.blocks.reserve(static_cast<std::size_t>(needed));
  for (Index i = 0; i < needed; ++i) {
    table.blocks.push_back(free_list_.back());
    free_list_.pop_back();
  }
  return table;
}

void PagedKvCache::free_sequence(BlockTable& table) {
  std::lock_guard lock(alloc_mutex_);
  // Reverse order so a following allocation of the same size gets the same ids.
  for (auto it = table.blocks.rbegin(); it != table.blocks.rend(); ++it) {
    const Index block = *it;
    const auto first = static_cast<std::size_t>(block * num_kv_heads_ * block_size_);
    std::fill_n(written_.begin() + static_cast<std::ptrdiff_t>(first),
                num_kv_heads_ * block_size_, std::uint8_t{0});
    free_list_.push_back(block);
  }
  table.blocks.clear();
  table.num_tokens = 0;
}

std::pair<Index, Index> PagedKvCache::locate(const BlockTable& table, Index token_pos) const {
  const Index capacity = static_cast<Index>(table.blocks.size()) * block_size_;
  if (token_pos < 0 || token_pos >= capacity) {
    throw Error(ErrorCode::IndexOutOfRange,
                "token " + std::to_string(token_pos) + " beyond table capacity " +
                    std::to_string(capacity));
  }
  return {table.blocks[static_cast<std::size_t>(token_pos / block_size_)],
          token_pos % block_size_};
}

void PagedKvCache::write_kv(const BlockTable& table, Index token_pos, Index kv_head,
                            std::span<const float> k_vec, std::span<const float> v_vec) {
  if (kv_head < 0 || kv_head >= num_kv_heads_) {
    throw Error(ErrorCode::IndexOutOfRange, "kv head " + std::to_string(kv_head));
  }
  if (static_cast<Index>(k_vec.size()) != head_size_ ||
      static_cast<Index>(v_vec.size()) != head_size_) {
    throw Error(ErrorCode::ShapeError, "K/V vectors must have head_size elements");
  }
  const auto [block, slot] = locate(table, token_pos);
  const auto flag = static_cast<std::size_t>((block * num_kv_heads_ + kv_head) * block_size_ + slot);
  if (written_[flag] != 0) {
    throw Error(ErrorCode::InvalidSequence,
                "slot for token " + std::to_string(token_pos) + " already written");
  }
  written_[flag] = 1;
  const std::size_t off = physical_offset(block, kv_head, slot);
  std::copy(k_vec.begin(), k_vec.end(), k_store_.begin() + static_cast<std::ptrdiff_t>(off));
  std::copy(v_vec.begin(), v_vec.end(), v_store_.begin() + static_cast<std::ptrdiff_t>(off));
}

std::pair<VectorF, VectorF> PagedKvCache::read_kv(const BlockTable& table, Index token_pos,
                                                  Index kv_head) const {
  if (kv_head < 0 || kv_head >= num_kv_heads_) {
    throw Error(ErrorCode::IndexOutOfRange, "kv head " + std::to_string(kv_head));
  }
  const auto [block, slot] = locate(table, token_pos);
  const std::size_t off = physical_offset(block, kv_head, slot);
  return {Eigen::Map<const VectorF>(k_store_.data() + off, head_size_),
          Eigen::Map<const VectorF>(v_store_.data() + off, head_size_)};
}

KvTile PagedKvCache::read_kv_tile(const BlockTable& table, Index kv_head, Index tile_start,
                                  Index tile_len, Index valid_len) const {
  KvTile tile;
  tile.k.resize(tile_len, head_size_);
  tile.v.resize(tile_len, head_size_);
  const Index valid =
      read_kv_tile_into(table, kv_head, tile_start, tile_len, valid_len, tile.k, tile.v);
  tile.mask = MaskVector::Constant(tile_len, false);
  tile.mask.head(valid).setConstant(true);
  return tile;
}

Index PagedKvCache::read_kv_tile_into(const BlockTable& table, Index kv_head,
                                      Index tile_start, Index tile_len, Index valid_len,
                                      Eigen::Ref<MatrixF> k, Eigen::Ref<MatrixF> v) const {
  if (kv_head < 0 || kv_head >= num_kv_heads_) {
    throw Error(ErrorCode::IndexOutOfRange, "kv head " + std::to_string(kv_head));
  }
  if (k.rows() < tile_len || v.rows() < tile_len || k.cols() != head_size_ ||
      v.cols() != head_size_) {
    throw Error(ErrorCode::ShapeError, "tile buffers too small");
  }
  const Index capacity = static_cast<Index>(table.blocks.size()) * block_size_;
  if (valid_len > capacity) {
    throw Error(ErrorCode::IndexOutOfRange, "valid_len exceeds table capacity");
  }
  const Index valid = std::clamp<Index>(valid_len - tile_start, 0, tile_len);

  // Copy block-contiguous runs.
  Index r = 0;
  while (r < valid) {
    const Index pos = tile_start + r;
    const Index block = table.blocks[static_cast<std::size_t>(pos / block_size_)];
    const Index slot = pos % block_size_;
    const Index run = std::min(block_size_ - slot, valid - r);
    const std::size_t off = physical_offset(block, kv_head, slot);
    k.middleRows(r, run) = Eigen::Map<const MatrixF>(k_store_.data() + off, run, head_size_);
    v.middleRows(r, run) = Eigen::Map<const MatrixF>(v_store_.data() + off, run, head_size_);
    r += run;
  }
  if (valid < tile_len) {
    k.middleRows(valid, tile_len - valid).setZero();
    v.middleRows(valid, tile_len - valid).setZero();
  }
  return valid;
}

}  // namespace pagedattn
