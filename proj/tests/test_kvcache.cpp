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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "pagedattn/kvcache.hpp"
#include "test_helpers.hpp"

using namespace pagedattn;
using pagedattn::testing::bitwise_equal;
using pagedattn::testing::random_matrix;

namespace {

std::vector<float> row_vec(const MatrixF& m, Index r) {
  return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

TEST(Allocate, BlockCounts) {
  PagedKvCache cache(16, 16, 2, 4);
  EXPECT_EQ(cache.allocate_sequence(33).blocks.size(), 3u);
  EXPECT_EQ(cache.allocate_sequence(16).blocks.size(), 1u);
  EXPECT_EQ(cache.allocate_sequence(1).blocks.size(), 1u);
  EXPECT_EQ(cache.free_block_count(), 11);
}

TEST(Allocate, LifoOrderAndOutOfMemory) {
  PagedKvCache cache(4, 16, 1, 4);
  BlockTable a = cache.allocate_sequence(32);
  EXPECT_EQ(a.blocks, (std::vector<Index>{0, 1}));
  try {
    cache.allocate_sequence(48);
    FAIL() << "expected OutOfCacheMemory";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfCacheMemory);
  }
  EXPECT_EQ(cache.free_block_count(), 2);
  cache.free_sequence(a);
  EXPECT_TRUE(a.blocks.empty());
  EXPECT_EQ(cache.free_block_count(), 4);
  // Most recently freed block comes back first.
  BlockTable b = cache.allocate_sequence(16);
  EXPECT_EQ(b.blocks.size(), 1u);
}

TEST(Allocate, ConservationUnderChurn) {
  PagedKvCache cache(64, 8, 1, 2);
  std::mt19937_64 rng(3);
  std::vector<BlockTable> live;
  for (int step = 0; step < 500; ++step) {
    if (!live.empty() && rng() % 2 == 0) {
      const std::size_t i = rng() % live.size();
      cache.free_sequence(live[i]);
      live.erase(live.begin() + static_cast<long>(i));
    } else {
      const Index len = 1 + static_cast<Index>(rng() % 40);
      try {
        live.push_back(cache.allocate_sequence(len));
      } catch (const Error& e) {
        ASSERT_EQ(e.code(), ErrorCode::OutOfCacheMemory);
      }
    }
    std::set<Index> used;
    Index count = 0;
    for (const auto& t : live) {
      for (Index b : t.blocks) used.insert(b), ++count;
    }
    ASSERT_EQ(static_cast<Index>(used.size()), count) << "block handed out twice";
    ASSERT_EQ(cache.free_block_count() + count, 64);
  }
}

TEST(WriteRead, AddressingExample) {
  PagedKvCache cache(8, 16, 2, 3);
  BlockTable t = cache.allocate_sequence(20);
  t.blocks = {5, 2};  // fixed, non-trivial physical ids
  const std::vector<float> k{1, 2, 3}, v{4, 5, 6};
  cache.write_kv(t, 17, 1, k, v);
  EXPECT_EQ(cache.locate(t, 17), (std::pair<Index, Index>{2, 1}));
  auto [rk, rv] = cache.read_kv(t, 17, 1);
  EXPECT_EQ(std::vector<float>(rk.data(), rk.data() + 3), k);
  EXPECT_EQ(std::vector<float>(rv.data(), rv.data() + 3), v);
}

TEST(WriteRead, ZeroVector) {
  PagedKvCache cache(2, 16, 1, 4);
  BlockTable t = cache.allocate_sequence(3);
  const std::vector<float> z(4, 0.0f);
  cache.write_kv(t, 0, 0, z, z);
  auto [k, v] = cache.read_kv(t, 0, 0);
  EXPECT_TRUE(k.isZero(0));
  EXPECT_TRUE(v.isZero(0));
}

TEST(WriteRead, Errors) {
  PagedKvCache cache(4, 16, 2, 4);
  BlockTable t = cache.allocate_sequence(20);
  const std::vector<float> k(4, 1.0f), short_k(3, 1.0f);
  auto code = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code([&] { cache.write_kv(t, 32, 0, k, k); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code([&] { cache.write_kv(t, 0, 2, k, k); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code([&] { cache.write_kv(t, 0, 0, short_k, k); }), ErrorCode::ShapeError);
  cache.write_kv(t, 0, 0, k, k);
  EXPECT_EQ(code([&] { cache.write_kv(t, 0, 0, k, k); }), ErrorCode::InvalidSequence);
  // Freed blocks may be written again.
  cache.free_sequence(t);
  BlockTable again = cache.allocate_sequence(20);
  EXPECT_NO_THROW(cache.write_kv(again, 0, 0, k, k));
}

TEST(WriteRead, AddressInjectivityAcrossSequences) {
  const Index bs = 16, heads = 3, d = 2;
  PagedKvCache cache(32, bs, heads, d);
  std::vector<BlockTable> tables;
  std::vector<Index> lens{17, 40, 5, 64};
  for (Index len : lens) tables.push_back(cache.allocate_sequence(len));
  std::set<std::size_t> offsets;
  float stamp = 0;
  for (std::size_t s = 0; s < lens.size(); ++s) {
    for (Index t = 0; t < lens[s]; ++t) {
      for (Index h = 0; h < heads; ++h) {
        auto [b, slot] = cache.locate(tables[s], t);
        EXPECT_TRUE(offsets.insert(cache.physical_offset(b, h, slot)).second);
        const std::vector<float> k{stamp, -stamp}, v{stamp + 0.5f, 0};
        cache.write_kv(tables[s], t, h, k, v);
        stamp += 1;
      }
    }
  }
  stamp = 0;
  for (std::size_t s = 0; s < lens.size(); ++s) {
    for (Index t = 0; t < lens[s]; ++t) {
      for (Index h = 0; h < heads; ++h) {
        auto [k, v] = cache.read_kv(tables[s], t, h);
        EXPECT_EQ(k(0), stamp);
        EXPECT_EQ(v(0), stamp + 0.5f);
        stamp += 1;
      }
    }
  }
}

TEST(Tile, RaggedTail) {
  PagedKvCache cache(4, 16, 1, 2);
  BlockTable t = cache.allocate_sequence(20);
  for (Index p = 0; p < 20; ++p) {
    const std::vector<float> k{float(p), 1}, v{float(-p), 2};
    cache.write_kv(t, p, 0, k, v);
  }
  const KvTile tile = cache.read_kv_tile(t, 0, 16, 16, 20);
  EXPECT_EQ(tile.mask.count(), 4);
  for (Index r = 0; r < 16; ++r) {
    EXPECT_EQ(tile.mask(r), r < 4);
    if (r < 4) {
      EXPECT_EQ(tile.k(r, 0), float(16 + r));
    } else {
      EXPECT_TRUE(tile.k.row(r).isZero(0));
      EXPECT_TRUE(tile.v.row(r).isZero(0));
    }
  }
}

TEST(Tile, SpansTwoBlocks) {
  PagedKvCache cache(4, 16, 1, 1);
  BlockTable t = cache.allocate_sequence(32);
  t.blocks = {3, 1};
  for (Index p = 0; p < 32; ++p) {
    const std::vector<float> k{float(p)};
    cache.write_kv(t, p, 0, k, k);
  }
  const KvTile tile = cache.read_kv_tile(t, 0, 0, 32, 32);
  EXPECT_EQ(tile.mask.count(), 32);
  for (Index r = 0; r < 32; ++r) EXPECT_EQ(tile.k(r, 0), float(r));
  EXPECT_EQ(cache.locate(t, 15).first, 3);
  EXPECT_EQ(cache.locate(t, 16).first, 1);
}

TEST(Tile, RoundTripAcrossGeometries) {
  std::mt19937_64 rng(5);
  for (auto [bs, tile] : std::vector<std::pair<Index, Index>>{{16, 16}, {16, 32}, {32, 16}, {80, 64}}) {
    const Index heads = 2, d = 8;
    PagedKvCache cache(64, bs, heads, d);
    for (int rep = 0; rep < 5; ++rep) {
      const Index len = 1 + static_cast<Index>(rng() % 400);
      BlockTable t = cache.allocate_sequence(len);
      ASSERT_EQ(static_cast<Index>(t.blocks.size()), (len + bs - 1) / bs);
      std::vector<MatrixF> ks, vs;
      for (Index h = 0; h < heads; ++h) {
        ks.push_back(random_matrix(len, d, rng));
        vs.push_back(random_matrix(len, d, rng));
        for (Index p = 0; p < len; ++p) cache.write_kv(t, p, h, row_vec(ks[h], p), row_vec(vs[h], p));
      }
      for (Index h = 0; h < heads; ++h) {
        MatrixF k_back(len, d), v_back(len, d);
        for (Index start = 0; start < len; start += tile) {
          const KvTile kt = cache.read_kv_tile(t, h, start, tile, len);
          const Index n = std::min(tile, len - start);
          ASSERT_EQ(kt.mask.count(), n);
          k_back.middleRows(start, n) = kt.k.topRows(n);
          v_back.middleRows(start, n) = kt.v.topRows(n);
        }
        EXPECT_TRUE(bitwise_equal(k_back, ks[h])) << "bs=" << bs << " tile=" << tile;
        EXPECT_TRUE(bitwise_equal(v_back, vs[h]));
      }
      cache.free_sequence(t);
    }
  }
}

TEST(Move, KeepsContents) {
  PagedKvCache a(2, 4, 1, 2);
  BlockTable t = a.allocate_sequence(3);
  const std::vector<float> k{1, 2}, v{3, 4};
  a.write_kv(t, 2, 0, k, v);
  PagedKvCache b(std::move(a));
  EXPECT_EQ(b.free_block_count(), 1);
  EXPECT_EQ(b.read_kv(t, 2, 0).second(1), 4.0f);
}
