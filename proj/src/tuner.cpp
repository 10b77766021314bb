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

#include "pagedattn/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>
#include <utility>

namespace pagedattn {

std::string_view to_string(Feature f) noexcept {
  switch (f) {
    case Feature::DecodeShare: return "decode_share";
    case Feature::MaxSeqLen: return "max_seq_len";
    case Feature::TotalTokens: return "total_tokens";
    case Feature::NumSeqs: return "num_seqs";
  }
  return "unknown";
}

Feature parse_feature(std::string_view name) {
  for (Feature f : kAllFeatures) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorCode::ParseError, "unknown feature '" + std::string(name) + "'");
}

double ScenarioFeatures::get(Feature f) const {
  switch (f) {
    case Feature::DecodeShare: return decode_share;
    case Feature::MaxSeqLen: return static_cast<double>(max_seq_len);
    case Feature::TotalTokens: return static_cast<double>(total_tokens);
    case Feature::NumSeqs: return static_cast<double>(num_seqs);
  }
  return 0.0;
}

ScenarioFeatures features_of(std::span<const SequenceMeta> seqs) {
  ScenarioFeatures f;
  Index decodes = 0;
  for (const auto& s : seqs) {
    ++f.num_seqs;
    f.max_seq_len = std::max(f.max_seq_len, s.seq_len());
    f.total_tokens += s.seq_len();
    if (s.is_decode()) ++decodes;
  }
  f.decode_share = f.num_seqs > 0 ? static_cast<double>(decodes) / static_cast<double>(f.num_seqs) : 0.0;
  return f;
}

ScenarioFeatures features_of(const BatchMeta& batch) { return features_of(batch.seqs); }

void validate(const KernelConfigPoint& p) {
  if (p.tile_size < 1 || p.block_q < 1 || p.num_segments < 1 || p.num_instances < 0) {
    throw Error(ErrorCode::InvalidConfig, "config fields must be positive");
  }
  if (p.variant == Variant::ParallelTiled) {
    if (p.num_segments < 2) {
      throw Error(ErrorCode::InvalidConfig, "parallel_tiled needs num_segments >= 2");
    }
    if (p.block_q != 1) throw Error(ErrorCode::InvalidConfig, "parallel_tiled needs block_q == 1");
  }
}

double Scenario::decode_share() const {
  return features_of(data.seqs).decode_share;
}

Scenario make_scenario(const ScenarioSpec& spec) {
  Scenario s{spec, generate(spec)};
  const double n = static_cast<double>(spec.num_seqs);
  if (std::abs(s.decode_share() - spec.decode_share) > 1.0 / n + 1e-12) {
    throw Error(ErrorCode::InvalidConfig, "generated decode share deviates from spec");
  }
  return s;
}

LatencyStats summarize_latencies(std::vector<double> samples) {
  if (samples.empty()) throw Error(ErrorCode::NoData, "no latency samples");
  std::sort(samples.begin(), samples.end());
  const auto rank = [&](double pct) {
    const auto n = samples.size();
    auto k = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n)));
    return samples[std::clamp<std::size_t>(k, 1, n) - 1];
  };
  LatencyStats st;
  double sum = 0.0;
  for (double x : samples) sum += x;
  st.mean_us = sum / static_cast<double>(samples.size());
  st.p50_us = rank(50.0);
  st.p95_us = rank(95.0);
  return st;
}

AttentionConfig config_for(const Scenario& scenario, const KernelConfigPoint& point) {
  validate(point);
  if (point.variant == Variant::Baseline && point.tile_size != scenario.spec.kv_block_size) {
    throw Error(ErrorCode::InvalidConfig, "baseline tiles must equal the KV block size (" +
                                              std::to_string(scenario.spec.kv_block_size) + ")");
  }
  return make_config(scenario.data.heads, scenario.spec.kv_block_size, point.tile_size,
                     point.block_q);
}


HeadTensor run_kernel(const KernelConfigPoint& point, const Workload& w, const HeadTensor& q,
                      const AttentionConfig& cfg, const ExecutionOptions& exec) {
  if (point.num_instances > 0) {
    return static_grid_run(point.variant, w.batch, w.cache, w.tables, q, cfg,
                           point.num_instances, point.num_segments, exec);
  }
  switch (point.variant) {
    case Variant::Baseline:
      return baseline_attention(w.batch, w.cache, w.tables, q, cfg, exec);
    case Variant::QBlock:
      return qblock_attention(w.batch, w.cache, w.tables, q, cfg, exec);
    case Variant::ParallelTiled:
      return parallel_tiled_attention(w.batch, w.cache, w.tables, q, cfg, point.num_segments,
                                      exec);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown variant");
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv_mix(std::uint64_t h, float x) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &x, sizeof bits);
  for (int b = 0; b < 4; ++b) {
    h ^= (bits >> (8 * b)) & 0xffu;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::uint64_t output_checksum(const MatrixF& out) {
  std::uint64_t h = kFnvOffset;
  for (Index i = 0; i < out.size(); ++i) h = fnv_mix(h, out.data()[i]);
  return h;
}

std::uint64_t verified_checksum(const MatrixF& out, const MatrixF& reference, double tol) {
  if (out.rows() != reference.rows() || out.cols() != reference.cols()) {
    throw Error(ErrorCode::ShapeError, "checksum operands differ in shape");
  }
  std::uint64_t h = kFnvOffset;
  for (Index i = 0; i < out.size(); ++i) {
    const float a = out.data()[i];
    const float e = reference.data()[i];
    const double err = std::abs(double(a) - double(e)) / std::max(1.0, std::abs(double(e)));
    h = fnv_mix(h, err <= tol ? e : a);
  }
  return h;
}

TuningRecord run_microbenchmark(const Scenario& scenario, const KernelConfigPoint& point,
                                const BenchmarkOptions& opts, const HeadTensor& reference) {
  if (opts.warmup < 0 || opts.iters < 1) {
    throw Error(ErrorCode::InvalidConfig, "warmup must be >= 0 and iters >= 1");
  }
  const AttentionConfig cfg = config_for(scenario, point);
  const Workload w = materialize(scenario.data, cfg);
  const ExecutionOptions exec{opts.pool, nullptr};

  const HeadTensor out = run_kernel(point, w, scenario.data.q, cfg, exec);
  const double err = max_relative_error(out.data, reference.data);
  if (!(err <= opts.tolerance)) {
    throw Error(ErrorCode::VerificationFailed,
                "scenario '" + scenario.label() + "', " + std::string(to_string(point.variant)) +
                    ": max relative error " + std::to_string(err));
  }

  TuningRecord rec;
  rec.label = scenario.label();
  rec.features = features_of(scenario.data.seqs);
  rec.config = point;
  rec.iterations = opts.iters;
  rec.checksum = verified_checksum(out.data, reference.data, opts.tolerance);

  for (Index i = 0; i < opts.warmup; ++i) run_kernel(point, w, scenario.data.q, cfg, exec);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(opts.iters));
  for (Index i = 0; i < opts.iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const HeadTensor o = run_kernel(point, w, scenario.data.q, cfg, exec);
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  rec.latency = summarize_latencies(std::move(samples));
  return rec;
}

TuningRecord run_microbenchmark(const Scenario& scenario, const KernelConfigPoint& point,
                                const BenchmarkOptions& opts) {
  const AttentionConfig cfg = config_for(scenario, point);
  return run_microbenchmark(scenario, point, opts, reference_attention(scenario.data, cfg));
}

std::vector<TuningRecord> sweep(std::span<const Scenario> scenarios,
                                std::span<const KernelConfigPoint> grid,
                                const SweepOptions& opts) {
  if (scenarios.empty() || grid.empty()) {
    throw Error(ErrorCode::NoData, "sweep needs at least one scenario and one config");
  }
  for (const auto& s : scenarios) {
    for (const auto& p : grid) config_for(s, p);
  }

  std::map<std::pair<std::string, KernelConfigPoint>, TuningRecord> done;
  if (opts.records_path && std::filesystem::exists(*opts.records_path)) {
    for (auto& r : load_records(*opts.records_path)) {
      done.emplace(std::make_pair(r.label, r.config), r);
    }
  }

  std::vector<TuningRecord> out;
  out.reserve(scenarios.size() * grid.size());
  for (const auto& s : scenarios) {
    std::optional<HeadTensor> reference;
    for (const auto& p : grid) {
      if (auto it = done.find({s.label(), p}); it != done.end()) {
        out.push_back(it->second);
        continue;
      }
      if (!reference) reference = reference_attention(s.data, config_for(s, p));
      TuningRecord rec = run_microbenchmark(s, p, opts.bench, *reference);
      if (opts.records_path) append_record(*opts.records_path, rec);
      done.emplace(std::make_pair(rec.label, rec.config), rec);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

namespace {

bool faster(const TuningRecord& a, const TuningRecord& b) {
  return std::make_tuple(a.latency.mean_us, a.config.tile_size, static_cast<int>(a.config.variant)) <
         std::make_tuple(b.latency.mean_us, b.config.tile_size, static_cast<int>(b.config.variant));
}

/// Latencies of one scenario, keyed by configuration.
struct ScenarioTable {
  std::string label;
  ScenarioFeatures features;
  std::map<KernelConfigPoint, double> latency;
  KernelConfigPoint best_config;
  double best = 0.0;
  double worst = 0.0;

  double regret(const KernelConfigPoint& c) const {
    auto it = latency.find(c);
    return (it != latency.end() ? it->second : 2.0 * worst) - best;
  }
};

std::vector<ScenarioTable> tabulate(std::span<const TuningRecord> records) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no tuning records");
  const auto best = best_per_scenario(records);
  std::map<std::string, ScenarioTable> by_label;
  for (const auto& r : records) {
    auto [it, inserted] = by_label.try_emplace(r.label);
    ScenarioTable& t = it->second;
    if (inserted) {
      t.label = r.label;
      t.features = r.features;
      t.worst = r.latency.mean_us;
    }
    t.latency[r.config] = r.latency.mean_us;
    t.worst = std::max(t.worst, r.latency.mean_us);
  }
  std::vector<ScenarioTable> out;
  for (auto& [label, t] : by_label) {
    const TuningRecord& b = best.at(label);
    t.best_config = b.config;
    t.best = b.latency.mean_us;
    out.push_back(std::move(t));
  }
  return out;
}

std::set<KernelConfigPoint> all_configs(std::span<const TuningRecord> records) {
  std::set<KernelConfigPoint> s;
  for (const auto& r : records) s.insert(r.config);
  return s;
}

struct LeafChoice {
  KernelConfigPoint config;
  double regret = 0.0;
};

LeafChoice choose_leaf(const std::vector<const ScenarioTable*>& members,
                       const std::set<KernelConfigPoint>& configs) {
  LeafChoice best;
  std::size_t best_votes = 0;
  bool have = false;
  for (const auto& c : configs) {
    double regret = 0.0;
    std::size_t votes = 0;
    for (const ScenarioTable* t : members) {
      regret += t->regret(c);
      if (t->best_config == c) ++votes;
    }
    if (!have || regret < best.regret || (regret == best.regret && votes > best_votes)) {
      best = {c, regret};
      best_votes = votes;
      have = true;
    }
  }
  return best;
}

void grow(HeuristicTree& tree, std::size_t node, const std::vector<const ScenarioTable*>& members,
          const std::set<KernelConfigPoint>& configs, Index depth, Index max_depth) {
  const LeafChoice leaf = choose_leaf(members, configs);
  if (depth >= max_depth || leaf.regret <= 0.0 || members.size() < 2) return;

  struct Split {
    Feature feature;
    double threshold;
    double regret;
  };
  std::optional<Split> best;
  for (Feature f : kAllFeatures) {
    std::vector<double> values;
    for (const ScenarioTable* t : members) values.push_back(t->features.get(f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      const double thr = 0.5 * (values[i] + values[i + 1]);
      std::vector<const ScenarioTable*> lt, ge;
      for (const ScenarioTable* t : members) (t->features.get(f) < thr ? lt : ge).push_back(t);
      const double regret = choose_leaf(lt, configs).regret + choose_leaf(ge, configs).regret;
      if (!best || regret < best->regret) best = Split{f, thr, regret};
    }
  }
  const double eps = 1e-9 * std::max(1.0, leaf.regret);
  if (!best || !(best->regret < leaf.regret - eps)) return;

  std::vector<const ScenarioTable*> lt, ge;
  for (const ScenarioTable* t : members) {
    (t->features.get(best->feature) < best->threshold ? lt : ge).push_back(t);
  }
  const std::size_t lt_node = tree.add_leaf(choose_leaf(lt, configs).config);
  const std::size_t ge_node = tree.add_leaf(choose_leaf(ge, configs).config);
  tree.set_split(node, best->feature, best->threshold, lt_node, ge_node);
  grow(tree, lt_node, lt, configs, depth + 1, max_depth);
  grow(tree, ge_node, ge, configs, depth + 1, max_depth);
}

}  // namespace

std::map<std::string, TuningRecord> best_per_scenario(std::span<const TuningRecord> records) {
  std::map<std::string, TuningRecord> best;
  for (const auto& r : records) {
    auto it = best.find(r.label);
    if (it == best.end()) {
      best.emplace(r.label, r);
    } else if (faster(r, it->second)) {
      it->second = r;
    }
  }
  return best;
}

HeuristicTree::HeuristicTree(KernelConfigPoint single_leaf) { add_leaf(single_leaf); }

std::size_t HeuristicTree::add_leaf(const KernelConfigPoint& config) {
  Node n;
  n.leaf = true;
  n.config = config;
  nodes_.push_back(n);
  return nodes_.size() - 1;
}

std::size_t HeuristicTree::add_split(Feature feature, double threshold, std::size_t lt,
                                     std::size_t ge) {
  nodes_.emplace_back();
  set_split(nodes_.size() - 1, feature, threshold, lt, ge);
  return nodes_.size() - 1;
}

void HeuristicTree::set_split(std::size_t index, Feature feature, double threshold,
                              std::size_t lt, std::size_t ge) {
  Node& n = nodes_.at(index);
  n.leaf = false;
  n.feature = feature;
  n.threshold = threshold;
  n.lt = lt;
  n.ge = ge;
}

void HeuristicTree::validate() const {
  if (nodes_.empty()) throw Error(ErrorCode::ParseError, "empty heuristic tree");
  std::vector<int> seen(nodes_.size(), 0);
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (i >= nodes_.size()) throw Error(ErrorCode::ParseError, "child index out of range");
    if (seen[i]++) throw Error(ErrorCode::ParseError, "heuristic tree is not a tree");
    const Node& n = nodes_[i];
    if (n.leaf) {
      pagedattn::validate(n.config);
    } else {
      if (!std::isfinite(n.threshold)) throw Error(ErrorCode::ParseError, "non-finite threshold");
      stack.push_back(n.lt);
      stack.push_back(n.ge);
    }
  }
}

const KernelConfigPoint& HeuristicTree::evaluate(const ScenarioFeatures& f) const {
  if (nodes_.empty()) throw Error(ErrorCode::NoData, "empty heuristic tree");
  std::size_t i = 0;
  for (std::size_t steps = 0; steps <= nodes_.size(); ++steps) {
    const Node& n = nodes_.at(i);
    if (n.leaf) return n.config;
    i = f.get(n.feature) < n.threshold ? n.lt : n.ge;
  }
  throw Error(ErrorCode::ParseError, "cycle in heuristic tree");
}

Index HeuristicTree::depth() const {
  std::function<Index(std::size_t)> rec = [&](std::size_t i) -> Index {
    const Node& n = nodes_.at(i);
    return n.leaf ? 0 : 1 + std::max(rec(n.lt), rec(n.ge));
  };
  return nodes_.empty() ? 0 : rec(0);
}

HeuristicTree fit_decision_tree(std::span<const TuningRecord> records, Index max_depth) {
  const std::vector<ScenarioTable> tables = tabulate(records);
  const std::set<KernelConfigPoint> configs = all_configs(records);
  std::vector<const ScenarioTable*> members;
  for (const auto& t : tables) members.push_back(&t);
  HeuristicTree tree(choose_leaf(members, configs).config);
  grow(tree, tree.root(), members, configs, 0, std::max<Index>(0, max_depth));
  return tree;
}

double tree_regret(const HeuristicTree& tree, std::span<const TuningRecord> records) {
  double total = 0.0;
  for (const auto& t : tabulate(records)) total += t.regret(tree.evaluate(t.features));
  return total;
}

double config_regret(const KernelConfigPoint& config, std::span<const TuningRecord> records) {
  double total = 0.0;
  for (const auto& t : tabulate(records)) total += t.regret(config);
  return total;
}

double best_global_regret(std::span<const TuningRecord> records) {
  const auto tables = tabulate(records);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : all_configs(records)) {
    double total = 0.0;
    for (const auto& t : tables) total += t.regret(c);
    best = std::min(best, total);
  }
  return best;
}

KernelConfigPoint select_kernel(const HeuristicTree& tree, const BatchMeta& batch) {
  KernelConfigPoint chosen = tree.evaluate(features_of(batch));
  if (chosen.variant == Variant::ParallelTiled && !batch.decode_only()) {
    chosen = {Variant::QBlock, chosen.tile_size, kFallbackBlockQ, 1, chosen.num_instances};
  }
  return chosen;
}

std::string to_pseudocode(const HeuristicTree& tree) {
  std::ostringstream os;
  std::function<void(std::size_t, int)> emit = [&](std::size_t i, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
    const auto& n = tree.nodes().at(i);
    if (n.leaf) {
      const auto& c = n.config;
      os << pad << "return " << to_string(c.variant) << "(tile_size=" << c.tile_size
         << ", block_q=" << c.block_q << ", num_segments=" << c.num_segments
         << ", num_instances=" << c.num_instances << ")\n";
      return;
    }
    os << pad << "if " << to_string(n.feature) << " < " << n.threshold << ":\n";
    emit(n.lt, indent + 1);
    os << pad << "else:\n";
    emit(n.ge, indent + 1);
  };
  emit(tree.root(), 0);
  return os.str();
}

}  // namespace pagedattn
