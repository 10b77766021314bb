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

#include "pagedattn/kernels.hpp"

#include <algorithm>
#include <string>

#include "pagedattn/softmax.hpp"

namespace pagedattn {

std::string_view to_string(Variant v) noexcept {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::QBlock: return "qblock";
    case Variant::ParallelTiled: return "parallel_tiled";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "baseline") return Variant::Baseline;
  if (name == "qblock") return Variant::QBlock;
  if (name == "parallel_tiled") return Variant::ParallelTiled;
  throw Error(ErrorCode::ParseError, "unknown variant '" + std::string(name) + "'");
}

LaunchGrid baseline_grid(const BatchMeta& batch, const AttentionConfig& cfg) {
  LaunchGrid g;
  g.rank = 2;
  g.kind = batch.decode_only() ? GridKind::DecodeBaseline : GridKind::PrefillBaseline;
  // For a decode-only batch tot_query_length == num_seqs.
  g.dims = {batch.total_query_len(), cfg.num_query_heads, 1};
  return g;
}

LaunchGrid qblock_grid(const BatchMeta& batch, const AttentionConfig& cfg) {
  LaunchGrid g;
  g.rank = 2;
  g.kind = GridKind::QBlock;
  g.dims = {batch.total_q_blocks(), cfg.num_kv_heads, 1};
  return g;
}

LaunchGrid parallel_tiled_grid(const BatchMeta& batch, const AttentionConfig& cfg,
                               Index num_segments) {
  LaunchGrid g;
  g.rank = 3;
  g.kind = GridKind::ParallelTiled;
  g.dims = {batch.total_q_blocks(), cfg.num_kv_heads, num_segments};
  return g;
}

LaunchGrid static_grid(Index num_instances) {
  LaunchGrid g;
  g.rank = 1;
  g.kind = GridKind::Static;
  g.dims = {num_instances, 1, 1};
  return g;
}

std::vector<SegmentRange> assign_tiles_to_segments(Index num_tiles, Index num_segments) {
  if (num_segments < 1) throw Error(ErrorCode::InvalidConfig, "num_segments must be >= 1");
  std::vector<SegmentRange> out(static_cast<std::size_t>(num_segments));
  const Index base = num_tiles / num_segments;
  const Index extra = num_tiles % num_segments;
  Index start = 0;
  for (Index s = 0; s < num_segments; ++s) {
    const Index count = base + (s < extra ? 1 : 0);
    out[static_cast<std::size_t>(s)] = {start, count};
    start += count;
  }
  return out;
}

Index default_static_instances(const WorkerPool* pool) {
  if (pool == nullptr) return 1;
  return std::max<Index>(1, static_cast<Index>(pool->size()) - 1);
}

namespace {

SegmentRange segment_range(Index num_tiles, Index num_segments, Index segment) {
  const Index base = num_tiles / num_segments;
  const Index extra = num_tiles % num_segments;
  const Index start = segment * base + std::min(segment, extra);
  return {start, base + (segment < extra ? 1 : 0)};
}

void validate_inputs(const BatchMeta& batch, const PagedKvCache& cache,
                     std::span<const BlockTable> tables, const HeadTensor& q,
                     const AttentionConfig& cfg) {
  cfg.validate();
  if (q.tokens != batch.total_query_len() || q.heads != cfg.num_query_heads ||
      q.head_size != cfg.head_size) {
    throw Error(ErrorCode::ShapeError, "query tensor does not match batch/config");
  }
  if (cache.block_size() != cfg.kv_block_size || cache.num_kv_heads() != cfg.num_kv_heads ||
      cache.head_size() != cfg.head_size) {
    throw Error(ErrorCode::ShapeError, "KV cache geometry does not match config");
  }
  if (static_cast<Index>(tables.size()) != batch.num_seqs()) {
    throw Error(ErrorCode::ShapeError, "one block table per sequence required");
  }
  for (Index i = 0; i < batch.num_seqs(); ++i) {
    const auto& table = tables[static_cast<std::size_t>(i)];
    if (static_cast<Index>(table.blocks.size()) * cfg.kv_block_size <
        batch.seqs[static_cast<std::size_t>(i)].seq_len()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "block table of sequence " + std::to_string(i) + " too short");
    }
  }
}

void require_q_blocks(const BatchMeta& batch, const AttentionConfig& cfg) {
  if (batch.block_q != cfg.block_q) {
    throw Error(ErrorCode::InvalidConfig, "batch metadata built for block_q " +
                                              std::to_string(batch.block_q) + ", config has " +
                                              std::to_string(cfg.block_q));
  }
}

struct InstanceContext {
  LaunchTrace::Phase* phase;
  Index instance;

  void record(Index item) const {
    if (phase) phase->items[static_cast<std::size_t>(instance)].push_back(item);
  }
  void wrote(Index rows) const {
    if (phase) phase->writes[static_cast<std::size_t>(instance)] += rows;
  }
};

/// One launch: `total` work items on either a dynamic grid (one instance per
/// item) or a static grid of `static_instances` grid-striding instances.
template <typename Fn>
void launch(Index total, std::optional<Index> static_instances, const ExecutionOptions& exec,
            Fn&& run_item) {
  const Index instances = static_instances.value_or(total);
  LaunchTrace::Phase* phase = nullptr;
  if (exec.trace) {
    phase = &exec.trace->phases.emplace_back();
    phase->items.resize(static_cast<std::size_t>(instances));
    phase->writes.assign(static_cast<std::size_t>(instances), 0);
  }
  auto body = [&](Index w) {
    const InstanceContext ctx{phase, w};
    if (static_instances) {
      for (Index item = w; item < total; item += instances) {
        ctx.record(item);
        run_item(item, ctx);
      }
    } else {
      ctx.record(w);
      run_item(w, ctx);
    }
  };
  if (exec.pool) {
    exec.pool->parallel_for(instances, body);
  } else {
    for (Index w = 0; w < instances; ++w) body(w);
  }
}

HeadTensor run_baseline(const BatchMeta& batch, const PagedKvCache& cache,
                        std::span<const BlockTable> tables, const HeadTensor& q,
                        const AttentionConfig& cfg, std::optional<Index> static_instances,
                        const ExecutionOptions& exec) {
  validate_inputs(batch, cache, tables, q, cfg);
  if (cfg.tile_size != cfg.kv_block_size) {
    throw Error(ErrorCode::InvalidConfig, "baseline kernel requires tile_size == kv_block_size");
  }
  const Index heads = cfg.num_query_heads;
  const Index d = cfg.head_size;
  const Index tile = cfg.kv_block_size;
  HeadTensor out(q.tokens, heads, d);

  launch(baseline_grid(batch, cfg).size(), static_instances, exec,
         [&](Index item, const InstanceContext& ctx) {
           const Index token = item / heads;
           const Index head = item % heads;
           const Index seq = seq_index_lookup(batch.cu_query_lens, token);
           const SequenceMeta& meta = batch.seqs[static_cast<std::size_t>(seq)];
           const Index visible =
               meta.context_len + (token - batch.cu_query_lens[static_cast<std::size_t>(seq)]) + 1;
           const Index kv_head = kv_head_for_query_head(head, cfg);
           const BlockTable& table = tables[static_cast<std::size_t>(seq)];

           const MatrixF q_row = q.row(token, head);
           SoftmaxState<float> state(1, d);
           MatrixF k_tile(tile, d);
           MatrixF v_tile(tile, d);
           MatrixF s;
           for (Index start = 0; start < visible; start += tile) {
             const Index valid =
                 cache.read_kv_tile_into(table, kv_head, start, tile, visible, k_tile, v_tile);
             scores_into(q_row, k_tile, cfg.scale, s);
             const Index cols[1] = {valid};
             online_update_prefix(state, s, v_tile, std::span<const Index>(cols));
           }
           finalize_row(state, 0, out.data.row(out.row_index(token, head)));
           ctx.wrote(1);
         });
  return out;
}

/// Where one Q-Block sits in its sequence.
struct QBlockGeometry {
  Index seq = 0;
  Index context_len = 0;
  Index token_start = 0;   // within the sequence's query
  Index valid_tokens = 0;  // <= block_q
  Index first_row = 0;     // global query-token index of token_start
  Index max_visible = 0;   // keys needed by the last valid token
};

QBlockGeometry q_block_geometry(const BatchMeta& batch, const AttentionConfig& cfg, Index qb) {
  QBlockGeometry g;
  g.seq = seq_index_lookup(batch.cu_q_blocks, qb);
  const auto s = static_cast<std::size_t>(g.seq);
  const SequenceMeta& meta = batch.seqs[s];
  g.context_len = meta.context_len;
  g.token_start = (qb - batch.cu_q_blocks[s]) * cfg.block_q;
  g.valid_tokens = std::min(cfg.block_q, meta.query_len - g.token_start);
  g.first_row = batch.cu_query_lens[s] + g.token_start;
  g.max_visible = g.context_len + g.token_start + g.valid_tokens;
  return g;
}

/// Working buffers for one Q-Block instance.
struct QBlockScratch {
  MatrixF q_block;
  std::vector<Index> row_visible;
  std::vector<Index> visible_cols;
  MatrixF k_tile;
  MatrixF v_tile;
  MatrixF s;
  SoftmaxState<float> state;

  explicit QBlockScratch(const AttentionConfig& cfg)
      : q_block(cfg.block_m(), cfg.head_size),
        row_visible(static_cast<std::size_t>(cfg.block_m())),
        visible_cols(static_cast<std::size_t>(cfg.block_m())),
        k_tile(cfg.tile_size, cfg.head_size),
        v_tile(cfg.tile_size, cfg.head_size),
        state(cfg.block_m(), cfg.head_size) {}
};

void load_q_block(const HeadTensor& q, const AttentionConfig& cfg, const QBlockGeometry& g,
                  Index kv_head, QBlockScratch& sc) {
  const Index group = cfg.group_size();
  for (Index r = 0; r < cfg.block_m(); ++r) {
    const Index tok = r / group;
    const auto ur = static_cast<std::size_t>(r);
    if (tok < g.valid_tokens) {
      sc.q_block.row(r) = q.row(g.first_row + tok, kv_head * group + r % group);
      sc.row_visible[ur] = g.context_len + g.token_start + tok + 1;
    } else {
      sc.q_block.row(r).setZero();
      sc.row_visible[ur] = 0;
    }
  }
}

void process_tiles(const PagedKvCache& cache, const BlockTable& table, const AttentionConfig& cfg,
                   const QBlockGeometry& g, Index kv_head, SegmentRange tiles, QBlockScratch& sc) {
  const Index tile = cfg.tile_size;
  for (Index t = tiles.start_tile; t < tiles.start_tile + tiles.tile_count; ++t) {
    const Index start = t * tile;
    cache.read_kv_tile_into(table, kv_head, start, tile, g.max_visible, sc.k_tile, sc.v_tile);
    scores_into(sc.q_block, sc.k_tile, cfg.scale, sc.s);
    for (std::size_t r = 0; r < sc.row_visible.size(); ++r) {
      sc.visible_cols[r] = std::clamp<Index>(sc.row_visible[r] - start, 0, tile);
    }
    online_update_prefix(sc.state, sc.s, sc.v_tile, std::span<const Index>(sc.visible_cols));
  }
}

HeadTensor run_qblock(const BatchMeta& batch, const PagedKvCache& cache,
                      std::span<const BlockTable> tables, const HeadTensor& q,
                      const AttentionConfig& cfg, std::optional<Index> static_instances,
                      const ExecutionOptions& exec) {
  validate_inputs(batch, cache, tables, q, cfg);
  require_q_blocks(batch, cfg);
  const Index group = cfg.group_size();
  const Index kv_heads = cfg.num_kv_heads;
  HeadTensor out(q.tokens, cfg.num_query_heads, cfg.head_size);

  launch(qblock_grid(batch, cfg).size(), static_instances, exec,
         [&](Index item, const InstanceContext& ctx) {
           const Index qb = item / kv_heads;
           const Index kv_head = item % kv_heads;
           const QBlockGeometry g = q_block_geometry(batch, cfg, qb);
           const BlockTable& table = tables[static_cast<std::size_t>(g.seq)];
           QBlockScratch sc(cfg);
           load_q_block(q, cfg, g, kv_head, sc);
           process_tiles(cache, table, cfg, g, kv_head,
                         {0, ceil_div(g.max_visible, cfg.tile_size)}, sc);
           const Index rows = g.valid_tokens * group;
           for (Index r = 0; r < rows; ++r) {
             finalize_row(sc.state, r,
                          out.data.row(out.row_index(g.first_row + r / group,
                                                     kv_head * group + r % group)));
           }
           ctx.wrote(rows);
         });
  return out;
}

HeadTensor run_parallel_tiled(const BatchMeta& batch, const PagedKvCache& cache,
                              std::span<const BlockTable> tables, const HeadTensor& q,
                              const AttentionConfig& cfg, Index num_segments,
                              std::optional<Index> static_instances,
                              const ExecutionOptions& exec) {
  if (num_segments < 1) throw Error(ErrorCode::InvalidConfig, "num_segments must be >= 1");
  validate_inputs(batch, cache, tables, q, cfg);
  require_q_blocks(batch, cfg);
  if (cfg.block_q != 1) {
    throw Error(ErrorCode::InvalidConfig, "parallel tiled softmax requires block_q == 1");
  }
  const Index group = cfg.group_size();
  const Index kv_heads = cfg.num_kv_heads;
  const Index block_m = cfg.block_m();
  HeadTensor out(q.tokens, cfg.num_query_heads, cfg.head_size);

  // Phase 1: one partial state per (Q-Block, KV head, segment), written to
  // disjoint slots.
  const Index partial_count = parallel_tiled_grid(batch, cfg, num_segments).size();
  std::vector<SegmentResult<float>> partials(static_cast<std::size_t>(partial_count));
  launch(partial_count, static_instances, exec, [&](Index item, const InstanceContext& ctx) {
    const Index segment = item % num_segments;
    const Index rest = item / num_segments;
    const Index kv_head = rest % kv_heads;
    const Index qb = rest / kv_heads;
    const QBlockGeometry g = q_block_geometry(batch, cfg, qb);
    const BlockTable& table = tables[static_cast<std::size_t>(g.seq)];
    QBlockScratch sc(cfg);
    load_q_block(q, cfg, g, kv_head, sc);
    const Index num_tiles = ceil_div(g.max_visible, cfg.tile_size);
    process_tiles(cache, table, cfg, g, kv_head, segment_range(num_tiles, num_segments, segment),
                  sc);
    auto& slot = partials[static_cast<std::size_t>(item)];
    slot.acc = std::move(sc.state.acc);
    slot.m = std::move(sc.state.m);
    slot.l = std::move(sc.state.l);
    slot.segment_index = segment;
    ctx.wrote(block_m);
  });

  // Phase 2: rescaling reduction over segments in segment order.
  launch(qblock_grid(batch, cfg).size(), static_instances, exec,
         [&](Index item, const InstanceContext& ctx) {
           const Index qb = item / kv_heads;
           const Index kv_head = item % kv_heads;
           const QBlockGeometry g = q_block_geometry(batch, cfg, qb);
           const std::span<const SegmentResult<float>> parts(
               partials.data() + item * num_segments, static_cast<std::size_t>(num_segments));
           const Index rows = g.valid_tokens * group;
           for (Index r = 0; r < rows; ++r) {
             const bool ok = merge_segment_row<float>(
                 parts, r,
                 out.data.row(out.row_index(g.first_row + r / group, kv_head * group + r % group)));
             if (!ok) throw Error(ErrorCode::EmptyAttentionRow, "query row saw no keys");
           }
           ctx.wrote(rows);
         });
  return out;
}

}  // namespace

QBlockDescriptor describe_q_block(const BatchMeta& batch, const AttentionConfig& cfg,
                                  Index q_block_index, Index kv_head) {
  if (kv_head < 0 || kv_head >= cfg.num_kv_heads) {
    throw Error(ErrorCode::IndexOutOfRange, "kv head " + std::to_string(kv_head));
  }
  require_q_blocks(batch, cfg);
  const QBlockGeometry g = q_block_geometry(batch, cfg, q_block_index);
  QBlockDescriptor d;
  d.seq_index = g.seq;
  d.q_block_in_seq = g.token_start / cfg.block_q;
  d.q_token_start = g.token_start;
  d.kv_head = kv_head;
  const Index group = cfg.group_size();
  for (Index r = 0; r < g.valid_tokens * group; ++r) {
    d.rows.emplace_back(g.token_start + r / group, kv_head * group + r % group);
  }
  return d;
}

HeadTensor baseline_attention(const BatchMeta& batch, const PagedKvCache& cache,
                              std::span<const BlockTable> tables, const HeadTensor& q,
                              const AttentionConfig& cfg, const ExecutionOptions& exec) {
  return run_baseline(batch, cache, tables, q, cfg, std::nullopt, exec);
}

HeadTensor qblock_attention(const BatchMeta& batch, const PagedKvCache& cache,
                            std::span<const BlockTable> tables, const HeadTensor& q,
                            const AttentionConfig& cfg, const ExecutionOptions& exec) {
  return run_qblock(batch, cache, tables, q, cfg, std::nullopt, exec);
}

HeadTensor parallel_tiled_attention(const BatchMeta& batch, const PagedKvCache& cache,
                                    std::span<const BlockTable> tables, const HeadTensor& q,
                                    const AttentionConfig& cfg, Index num_segments,
                                    const ExecutionOptions& exec) {
  return run_parallel_tiled(batch, cache, tables, q, cfg, num_segments, std::nullopt, exec);
}

HeadTensor static_grid_run(Variant variant, const BatchMeta& batch, const PagedKvCache& cache,
                           std::span<const BlockTable> tables, const HeadTensor& q,
                           const AttentionConfig& cfg, Index num_instances, Index num_segments,
                           const ExecutionOptions& exec) {
  if (num_instances < 1) throw Error(ErrorCode::InvalidConfig, "num_instances must be >= 1");
  switch (variant) {
    case Variant::Baseline:
      return run_baseline(batch, cache, tables, q, cfg, num_instances, exec);
    case Variant::QBlock:
      return run_qblock(batch, cache, tables, q, cfg, num_instances, exec);
    case Variant::ParallelTiled:
      return run_parallel_tiled(batch, cache, tables, q, cfg, num_segments, num_instances, exec);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown variant");
}

}  // namespace pagedattn
