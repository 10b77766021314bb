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

#include "pagedattn/scenario_gen.hpp"

#include <cmath>
#include <random>
#include <string>

#include "pagedattn/softmax.hpp"

namespace pagedattn {

namespace {

void fill_uniform(MatrixF& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void validate_spec(const ScenarioSpec& spec) {
  if (spec.num_seqs < 1) throw Error(ErrorCode::EmptyBatch, "num_seqs must be >= 1");
  if (spec.max_seq_len < 1) throw Error(ErrorCode::InvalidConfig, "max_seq_len must be >= 1");
  if (!(spec.decode_share >= 0.0 && spec.decode_share <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "decode_share must lie in [0, 1]");
  }
  if (decode_count(spec) > 0 && spec.max_seq_len < 2) {
    throw Error(ErrorCode::InvalidConfig, "decode sequences need max_seq_len >= 2");
  }
}

}  // namespace

Index decode_count(const ScenarioSpec& spec) {
  return static_cast<Index>(std::lround(spec.decode_share * static_cast<double>(spec.num_seqs)));
}

GeneratedBatch generate(const ScenarioSpec& spec) {
  validate_spec(spec);
  std::mt19937_64 rng(spec.seed);
  const Index decodes = decode_count(spec);
  const bool fixed = spec.length_distribution == LengthDistribution::Fixed;

  std::vector<SequenceMeta> seqs;
  seqs.reserve(static_cast<std::size_t>(spec.num_seqs));
  for (Index i = 0; i < spec.num_seqs; ++i) {
    SequenceMeta s;
    if (i < decodes) {
      std::uniform_int_distribution<Index> ctx(1, spec.max_seq_len - 1);
      s.context_len = fixed ? spec.max_seq_len - 1 : ctx(rng);
      s.query_len = 1;
    } else {
      std::uniform_int_distribution<Index> len(1, spec.max_seq_len);
      s.context_len = 0;
      s.query_len = fixed ? spec.max_seq_len : len(rng);
    }
    seqs.push_back(s);
  }
  return generate_payloads(seqs, spec.heads, rng());
}

GeneratedBatch generate_payloads(std::span<const SequenceMeta> seqs, const HeadConfig& heads,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratedBatch gen;
  gen.seqs.assign(seqs.begin(), seqs.end());
  gen.heads = heads;
  Index total_q = 0;
  for (const auto& s : seqs) total_q += s.query_len;
  gen.q = HeadTensor(total_q, heads.num_query_heads, heads.head_size);
  fill_uniform(gen.q.data, rng);
  for (const auto& s : seqs) {
    HeadTensor k(s.seq_len(), heads.num_kv_heads, heads.head_size);
    HeadTensor v(s.seq_len(), heads.num_kv_heads, heads.head_size);
    fill_uniform(k.data, rng);
    fill_uniform(v.data, rng);
    gen.keys.push_back(std::move(k));
    gen.values.push_back(std::move(v));
  }
  return gen;
}

AttentionConfig make_config(const HeadConfig& heads, Index kv_block_size, Index tile_size,
                            Index block_q) {
  return AttentionConfig::make(heads.num_query_heads, heads.num_kv_heads, heads.head_size,
                               kv_block_size, tile_size, block_q);
}

Workload materialize(const GeneratedBatch& gen, const AttentionConfig& cfg, Index spare_blocks) {
  if (gen.heads.num_kv_heads != cfg.num_kv_heads || gen.heads.head_size != cfg.head_size ||
      gen.heads.num_query_heads != cfg.num_query_heads) {
    throw Error(ErrorCode::ShapeError, "payload heads do not match config");
  }
  Index blocks = spare_blocks;
  for (const auto& s : gen.seqs) blocks += ceil_div(s.seq_len(), cfg.kv_block_size);

  Workload w{build_batch_meta(gen.seqs, cfg),
             PagedKvCache(blocks, cfg.kv_block_size, cfg.num_kv_heads, cfg.head_size),
             {}};
  w.tables.reserve(gen.seqs.size());
  for (std::size_t i = 0; i < gen.seqs.size(); ++i) {
    BlockTable table = w.cache.allocate_sequence(gen.seqs[i].seq_len());
    const HeadTensor& k = gen.keys[i];
    const HeadTensor& v = gen.values[i];
    for (Index t = 0; t < k.tokens; ++t) {
      for (Index h = 0; h < k.heads; ++h) {
        const auto kr = k.row_index(t, h);
        w.cache.write_kv(table, t, h,
                         std::span<const float>(k.data.row(kr).data(), static_cast<std::size_t>(k.head_size)),
                         std::span<const float>(v.data.row(kr).data(), static_cast<std::size_t>(v.head_size)));
      }
    }
    w.tables.push_back(std::move(table));
  }
  return w;
}

HeadTensor reference_attention(const GeneratedBatch& gen, const AttentionConfig& cfg) {
  HeadTensor out(gen.q.tokens, cfg.num_query_heads, cfg.head_size);
  Index first = 0;
  for (std::size_t i = 0; i < gen.seqs.size(); ++i) {
    const SequenceMeta& s = gen.seqs[i];
    std::vector<Index> visible(static_cast<std::size_t>(s.query_len));
    for (Index j = 0; j < s.query_len; ++j) visible[static_cast<std::size_t>(j)] = s.context_len + j + 1;
    for (Index h = 0; h < cfg.num_query_heads; ++h) {
      const Index kvh = kv_head_for_query_head(h, cfg);
      MatrixF qh(s.query_len, cfg.head_size);
      for (Index j = 0; j < s.query_len; ++j) qh.row(j) = gen.q.row(first + j, h);
      MatrixF kh(s.seq_len(), cfg.head_size);
      MatrixF vh(s.seq_len(), cfg.head_size);
      for (Index t = 0; t < s.seq_len(); ++t) {
        kh.row(t) = gen.keys[i].row(t, kvh);
        vh.row(t) = gen.values[i].row(t, kvh);
      }
      const RowMatrix<double> o =
          naive_attention_oracle<double>(qh, kh, vh, 1.0 / std::sqrt(double(cfg.head_size)), visible);
      for (Index j = 0; j < s.query_len; ++j) out.row(first + j, h) = o.row(j).cast<float>();
    }
    first += s.query_len;
  }
  return out;
}

void to_json(nlohmann::json& j, const ScenarioSpec& spec) {
  j = nlohmann::json{
      {"label", spec.label},
      {"seed", spec.seed},
      {"num_seqs", spec.num_seqs},
      {"max_seq_len", spec.max_seq_len},
      {"decode_share", spec.decode_share},
      {"length_distribution",
       spec.length_distribution == LengthDistribution::Fixed ? "fixed" : "uniform"},
      {"num_query_heads", spec.heads.num_query_heads},
      {"num_kv_heads", spec.heads.num_kv_heads},
      {"head_size", spec.heads.head_size},
      {"kv_block_size", spec.kv_block_size},
  };
}

void from_json(const nlohmann::json& j, ScenarioSpec& spec) {
  try {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "scenario spec must be an object");
    spec.label = j.value("label", spec.label);
    spec.seed = j.value("seed", spec.seed);
    spec.num_seqs = j.value("num_seqs", spec.num_seqs);
    spec.max_seq_len = j.value("max_seq_len", spec.max_seq_len);
    spec.decode_share = j.value("decode_share", spec.decode_share);
    const std::string dist = j.value("length_distribution", std::string("uniform"));
    if (dist == "uniform") {
      spec.length_distribution = LengthDistribution::Uniform;
    } else if (dist == "fixed") {
      spec.length_distribution = LengthDistribution::Fixed;
    } else {
      throw Error(ErrorCode::ParseError, "length_distribution must be uniform or fixed");
    }
    spec.heads.num_query_heads = j.value("num_query_heads", spec.heads.num_query_heads);
    spec.heads.num_kv_heads = j.value("num_kv_heads", spec.heads.num_kv_heads);
    spec.heads.head_size = j.value("head_size", spec.heads.head_size);
    spec.kv_block_size = j.value("kv_block_size", spec.kv_block_size);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  try {
    validate_spec(spec);
    make_config(spec.heads, spec.kv_block_size, spec.kv_block_size, 1);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace pagedattn
