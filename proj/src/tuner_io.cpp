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

#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "pagedattn/tuner.hpp"

namespace pagedattn {

namespace {

constexpr int kRecordsVersion = 1;

template <typename Fn>
auto parse_guard(Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return parse_guard([&] { return nlohmann::json::parse(in); });
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(s, &used, 16);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw Error(ErrorCode::ParseError, "bad checksum '" + s + "'");
  return v;
}

}  // namespace

nlohmann::json to_json(const KernelConfigPoint& p) {
  return {{"variant", std::string(to_string(p.variant))},
          {"tile_size", p.tile_size},
          {"block_q", p.block_q},
          {"num_segments", p.num_segments},
          {"num_instances", p.num_instances}};
}

KernelConfigPoint config_from_json(const nlohmann::json& j) {
  return parse_guard([&] {
    KernelConfigPoint p;
    p.variant = parse_variant(j.at("variant").get<std::string>());
    p.tile_size = j.value("tile_size", p.tile_size);
    p.block_q = j.value("block_q", p.variant == Variant::ParallelTiled ? Index{1} : p.block_q);
    p.num_segments = j.value("num_segments", p.num_segments);
    p.num_instances = j.value("num_instances", p.num_instances);
    validate(p);
    return p;
  });
}

nlohmann::json to_json(const TuningRecord& r) {
  return {{"v", kRecordsVersion},
          {"label", r.label},
          {"features",
           {{"num_seqs", r.features.num_seqs},
            {"max_seq_len", r.features.max_seq_len},
            {"total_tokens", r.features.total_tokens},
            {"decode_share", r.features.decode_share}}},
          {"config", to_json(r.config)},
          {"latency_us",
           {{"mean", r.latency.mean_us}, {"p50", r.latency.p50_us}, {"p95", r.latency.p95_us}}},
          {"iterations", r.iterations},
          {"checksum", hex64(r.checksum)}};
}

TuningRecord record_from_json(const nlohmann::json& j) {
  return parse_guard([&] {
    if (j.at("v").get<int>() != kRecordsVersion) {
      throw Error(ErrorCode::ParseError, "unsupported record version");
    }
    TuningRecord r;
    r.label = j.at("label").get<std::string>();
    const auto& f = j.at("features");
    r.features.num_seqs = f.at("num_seqs").get<Index>();
    r.features.max_seq_len = f.at("max_seq_len").get<Index>();
    r.features.total_tokens = f.at("total_tokens").get<Index>();
    r.features.decode_share = f.at("decode_share").get<double>();
    r.config = config_from_json(j.at("config"));
    const auto& l = j.at("latency_us");
    r.latency = {l.at("mean").get<double>(), l.at("p50").get<double>(), l.at("p95").get<double>()};
    r.iterations = j.at("iterations").get<Index>();
    r.checksum = parse_hex64(j.at("checksum").get<std::string>());
    if (!(r.latency.mean_us > 0.0)) throw Error(ErrorCode::ParseError, "mean latency must be > 0");
    return r;
  });
}

nlohmann::json to_json(const HeuristicTree& tree) {
  tree.validate();
  std::function<nlohmann::json(std::size_t)> rec = [&](std::size_t i) -> nlohmann::json {
    const auto& n = tree.nodes()[i];
    if (n.leaf) return to_json(n.config);
    return {{"feature", std::string(to_string(n.feature))},
            {"threshold", n.threshold},
            {"lt", rec(n.lt)},
            {"ge", rec(n.ge)}};
  };
  return rec(tree.root());
}

HeuristicTree tree_from_json(const nlohmann::json& j) {
  return parse_guard([&] {
    HeuristicTree tree;
    // Root first, children appended as they are visited.
    std::function<std::size_t(const nlohmann::json&)> rec = [&](const nlohmann::json& n) {
      if (!n.is_object()) throw Error(ErrorCode::ParseError, "tree node must be an object");
      if (n.contains("variant")) return tree.add_leaf(config_from_json(n));
      const std::size_t self = tree.add_leaf({});
      const Feature f = parse_feature(n.at("feature").get<std::string>());
      const double thr = n.at("threshold").get<double>();
      const std::size_t lt = rec(n.at("lt"));
      const std::size_t ge = rec(n.at("ge"));
      tree.set_split(self, f, thr, lt, ge);
      return self;
    };
    rec(j);
    tree.validate();
    return tree;
  });
}

std::vector<TuningRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<TuningRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(parse_guard([&] { return nlohmann::json::parse(line); })));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void append_record(const std::filesystem::path& path, const TuningRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_json(record).dump() << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

void save_tree(const std::filesystem::path& path, const HeuristicTree& tree) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << to_json(tree).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

HeuristicTree load_tree(const std::filesystem::path& path) {
  return tree_from_json(read_json_file(path));
}

std::vector<KernelConfigPoint> load_grid(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "grid file must hold a JSON array");
  std::vector<KernelConfigPoint> grid;
  for (const auto& item : j) grid.push_back(config_from_json(item));
  return grid;
}

std::vector<ScenarioSpec> load_scenarios(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  std::vector<ScenarioSpec> specs;
  auto add = [&](const nlohmann::json& item) {
    ScenarioSpec s;
    from_json(item, s);
    if (s.label.empty()) s.label = "scenario" + std::to_string(specs.size());
    specs.push_back(std::move(s));
  };
  if (j.is_array()) {
    for (const auto& item : j) add(item);
  } else {
    add(j);
  }
  return specs;
}

}  // namespace pagedattn
