#pragma once

// Dataset ingestion. Two formats:
//  - canonical JSON: {"num_nodes", "num_features", "num_classes", "edges",
//    "features" (active index lists), "labels", "splits"}
//  - citation pair: <name>.content rows "id<TAB>f1 .. fF<TAB>label" and
//    <name>.cites rows "cited<TAB>citing", with splits from a companion
//    <name>.splits.json. Feature columns are binarized (any nonzero -> 1).

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ga2c/common.hpp"
#include "ga2c/graph.hpp"
#include "ga2c/io_util.hpp"

namespace ga2c {

enum class DatasetFormat { canonical_json, content_cites };

struct DatasetLoadInfo {
  std::size_t raw_edge_rows = 0;        // lines in .cites / entries in "edges"
  std::size_t skipped_unknown_ids = 0;  // .cites rows referencing unknown nodes
  std::size_t skipped_self_loops = 0;
  std::size_t duplicate_pairs = 0;      // undirected duplicates collapsed
};

namespace detail {

inline std::vector<NodeId> parse_id_list(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string("split '") + what + "' must be an array");
  std::vector<NodeId> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<NodeId>());
  return out;
}

}  // namespace detail

inline Graph load_canonical_json(const std::string& path, DatasetLoadInfo* info = nullptr) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const std::size_t n = j.at("num_nodes").get<std::size_t>();
  const std::size_t f = j.at("num_features").get<std::size_t>();
  const std::size_t c = j.at("num_classes").get<std::size_t>();
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ParseError(path + ": edge entry is not a pair");
    edges.emplace_back(e[0].get<NodeId>(), e[1].get<NodeId>());
  }
  std::vector<FeatureVector> feats;
  for (const auto& row : j.at("features")) feats.push_back(row.get<FeatureVector>());
  std::vector<int> labels;
  if (j.contains("labels") && !j["labels"].is_null())
    for (const auto& y : j["labels"]) labels.push_back(y.is_null() ? -1 : y.get<int>());
  std::vector<NodeId> train, val, test;
  if (j.contains("splits")) {
    const auto& s = j["splits"];
    if (s.contains("train")) train = detail::parse_id_list(s["train"], "train");
    if (s.contains("val")) val = detail::parse_id_list(s["val"], "val");
    if (s.contains("test")) test = detail::parse_id_list(s["test"], "test");
  }
  if (info) {
    info->raw_edge_rows = edges.size();
    // duplicates are collapsed by Graph::build; count them here
    std::vector<std::pair<NodeId, NodeId>> norm;
    norm.reserve(edges.size());
    for (auto [u, v] : edges) norm.emplace_back(std::min(u, v), std::max(u, v));
    std::sort(norm.begin(), norm.end());
    info->duplicate_pairs =
        norm.size() - static_cast<std::size_t>(std::unique(norm.begin(), norm.end()) - norm.begin());
  }
  return Graph::build(n, f, c, edges, std::move(feats), std::move(labels), std::move(train),
                      std::move(val), std::move(test));
}

inline nlohmann::json graph_to_canonical_json(const Graph& g) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes();
  j["num_features"] = g.num_features;
  j["num_classes"] = g.num_classes;
  auto edges = nlohmann::json::array();
  for (NodeId u = 0; u < g.num_nodes(); ++u)
    for (NodeId v : g.adj[u])
      if (u < v) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  j["features"] = g.features;
  j["labels"] = g.labels;
  j["splits"] = {{"train", g.train_idx}, {"val", g.val_idx}, {"test", g.test_idx}};
  return j;
}

inline void save_canonical_json(const Graph& g, const std::string& path) {
  write_file_atomic(path, graph_to_canonical_json(g).dump() + "\n");
}

// Loads <stem>.content + <stem>.cites (+ <stem>.splits.json when present).
// Node ids are assigned by row order in .content; labels are mapped to class
// ids by lexicographic label-name order; cites rows with unknown ids are
// skipped and counted.
inline Graph load_content_cites(const std::string& stem, DatasetLoadInfo* info = nullptr) {
  const std::string content_path = stem + ".content";
  const std::string cites_path = stem + ".cites";
  std::ifstream content(content_path);
  if (!content) throw ConfigError("cannot open dataset file: " + content_path);

  std::vector<FeatureVector> feats;
  std::vector<std::string> label_names;
  std::map<std::string, NodeId> id_of;
  std::vector<std::string> raw_ids;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(content, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (ss >> cell) cells.push_back(cell);
    if (cells.size() < 3)
      throw ParseError(content_path + ":" + std::to_string(lineno) + ": expected id, features, label");
    if (width == 0)
      width = cells.size() - 2;
    else if (cells.size() - 2 != width)
      throw ParseError(content_path + ":" + std::to_string(lineno) + ": feature width " +
                       std::to_string(cells.size() - 2) + " != " + std::to_string(width));
    FeatureVector row;
    for (std::size_t i = 0; i < width; ++i) {
      double v;
      try {
        v = std::stod(cells[1 + i]);
      } catch (const std::exception&) {
        throw ParseError(content_path + ":" + std::to_string(lineno) + ": bad feature value '" +
                         cells[1 + i] + "'");
      }
      if (v != 0.0) row.push_back(static_cast<std::uint32_t>(i));
    }
    if (id_of.count(cells.front()))
      throw ParseError(content_path + ":" + std::to_string(lineno) + ": duplicate node id '" +
                       cells.front() + "'");
    id_of[cells.front()] = static_cast<NodeId>(feats.size());
    raw_ids.push_back(cells.front());
    feats.push_back(std::move(row));
    label_names.push_back(cells.back());
  }
  const std::size_t n = feats.size();
  if (n == 0) throw EmptyGraphError("no rows in " + content_path);

  std::map<std::string, int> class_of;
  for (const auto& name : label_names) class_of.emplace(name, 0);
  int next = 0;
  for (auto& [name, id] : class_of) id = next++;  // lexicographic order
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = class_of[label_names[i]];

  std::ifstream cites(cites_path);
  if (!cites) throw ConfigError("cannot open dataset file: " + cites_path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  DatasetLoadInfo local_info;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!(ss >> a >> b))
      throw ParseError(cites_path + ":" + std::to_string(lineno) + ": expected two ids");
    ++local_info.raw_edge_rows;
    auto ia = id_of.find(a), ib = id_of.find(b);
    if (ia == id_of.end() || ib == id_of.end()) {
      ++local_info.skipped_unknown_ids;
      continue;
    }
    if (ia->second == ib->second) {
      ++local_info.skipped_self_loops;
      continue;
    }
    edges.emplace_back(ia->second, ib->second);
  }
  {
    std::vector<std::pair<NodeId, NodeId>> norm;
    norm.reserve(edges.size());
    for (auto [u, v] : edges) norm.emplace_back(std::min(u, v), std::max(u, v));
    std::sort(norm.begin(), norm.end());
    local_info.duplicate_pairs =
        norm.size() - static_cast<std::size_t>(std::unique(norm.begin(), norm.end()) - norm.begin());
  }

  std::vector<NodeId> train, val, test;
  const std::string splits_path = stem + ".splits.json";
  if (file_exists(splits_path)) {
    nlohmann::json sj;
    std::ifstream sin(splits_path);
    try {
      sin >> sj;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(splits_path + ": " + e.what());
    }
    if (sj.contains("train")) train = detail::parse_id_list(sj["train"], "train");
    if (sj.contains("val")) val = detail::parse_id_list(sj["val"], "val");
    if (sj.contains("test")) test = detail::parse_id_list(sj["test"], "test");
  }
  if (info) *info = local_info;
  return Graph::build(n, width, class_of.size(), edges, std::move(feats), std::move(labels),
                      std::move(train), std::move(val), std::move(test));
}

// Writes the citation-pair form of a graph (ids are row indices, labels are
// "c<k>") so canonical -> content -> canonical round trips exactly.
inline void save_content_cites(const Graph& g, const std::string& stem) {
  std::ostringstream content;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    content << i;
    std::size_t next_active = 0;
    const auto& row = g.features[i];
    for (std::size_t fcol = 0; fcol < g.num_features; ++fcol) {
      const bool on = next_active < row.size() && row[next_active] == fcol;
      if (on) ++next_active;
      content << '\t' << (on ? 1 : 0);
    }
    content << '\t' << 'c' << (g.labels[i] < 0 ? 0 : g.labels[i]) << '\n';
  }
  write_file_atomic(stem + ".content", content.str());
  std::ostringstream cites;
  for (NodeId u = 0; u < g.num_nodes(); ++u)
    for (NodeId v : g.adj[u])
      if (u < v) cites << u << '\t' << v << '\n';
  write_file_atomic(stem + ".cites", cites.str());
  nlohmann::json sj = {{"train", g.train_idx}, {"val", g.val_idx}, {"test", g.test_idx}};
  write_file_atomic(stem + ".splits.json", sj.dump() + "\n");
}

// Resolves "<data_dir>/<name>" to whichever format is present.
inline Graph load_dataset(const std::string& data_dir, const std::string& name,
                          DatasetLoadInfo* info = nullptr) {
  namespace fs = std::filesystem;
  const fs::path dir(data_dir);
  const fs::path json_path = dir / (name + ".json");
  if (fs::exists(json_path)) return load_canonical_json(json_path.string(), info);
  const fs::path content_path = dir / (name + ".content");
  if (fs::exists(content_path)) return load_content_cites((dir / name).string(), info);
  throw ConfigError("dataset '" + name + "' not found under " + data_dir +
                    " (expected " + name + ".json or " + name + ".content/.cites)");
}

}  // namespace ga2c
