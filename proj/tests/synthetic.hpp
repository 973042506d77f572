#pragma once

// Synthetic graphs shared across the test and acceptance suites.

#include <memory>
#include <vector>

#include "ga2c/common.hpp"
#include "ga2c/graph.hpp"

namespace synthetic {

using ga2c::FeatureVector;
using ga2c::Graph;
using ga2c::NodeId;

inline std::shared_ptr<const Graph> share(Graph g) {
  return std::make_shared<const Graph>(std::move(g));
}

// Erdos-Renyi graph with random binary features and labels; splits cycle
// train/val/test over the nodes.
inline Graph random_graph(std::size_t n, std::size_t f, std::size_t c, double density,
                          std::size_t feats_per_node, std::uint64_t seed) {
  ga2c::Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (rng.uniform() < density) edges.emplace_back(u, v);
  std::vector<FeatureVector> feats(n);
  for (auto& row : feats) {
    for (std::size_t k = 0; k < feats_per_node; ++k)
      row.push_back(static_cast<std::uint32_t>(rng.index(f)));
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  std::vector<int> labels(n);
  for (auto& y : labels) y = static_cast<int>(rng.index(c));
  std::vector<NodeId> train, val, test;
  for (NodeId v = 0; v < n; ++v)
    (v % 3 == 0 ? train : v % 3 == 1 ? val : test).push_back(v);
  return Graph::build(n, f, c, edges, std::move(feats), std::move(labels), std::move(train),
                      std::move(val), std::move(test));
}

// Two-block community graph with class-aligned features: class k draws its
// features from block k of the feature space plus a little cross-class noise.
// Dense enough intra-class that a small GCN separates the classes easily.
inline Graph sbm_graph(std::size_t per_class, std::size_t classes, std::size_t f,
                       double p_in, double p_out, std::size_t feats_per_node,
                       std::uint64_t seed) {
  ga2c::Rng rng(seed);
  const std::size_t n = per_class * classes;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / per_class);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? p_in : p_out;
      if (rng.uniform() < p) edges.emplace_back(u, v);
    }
  const std::size_t block = f / classes;
  std::vector<FeatureVector> feats(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = feats[i];
    for (std::size_t k = 0; k < feats_per_node; ++k) {
      const bool noise = rng.uniform() < 0.1;
      const std::size_t cls = noise ? rng.index(classes) : static_cast<std::size_t>(labels[i]);
      row.push_back(static_cast<std::uint32_t>(cls * block + rng.index(block)));
    }
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  std::vector<NodeId> train, val, test;
  for (NodeId v = 0; v < n; ++v)
    (v % 4 == 0 ? train : v % 4 == 1 ? val : test).push_back(v);
  return Graph::build(n, f, classes, edges, std::move(feats), std::move(labels),
                      std::move(train), std::move(val), std::move(test));
}

// The 10-node planted-vulnerability toy: a class-0 ring bridged to a class-1
// hub cluster. The target (node 2) sits next to the bridge, so its clean
// prediction is correct but fragile; brute force over all single wirings and
// small feature patterns identifies exactly which injections flip it.
inline Graph toy_planted() {
  const std::size_t n = 10, f = 8, c = 2;
  std::vector<std::pair<NodeId, NodeId>> edges = {
      {0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {0, 2},  // class-0 ring + chord
      {5, 6}, {5, 7}, {6, 7}, {7, 8}, {7, 9}, {8, 9},  // class-1 hub cluster
      {2, 5},                                          // bridge at the target
  };
  std::vector<FeatureVector> feats = {
      {0, 1}, {1, 2}, {2},      {2, 3}, {0, 3},  // class 0; target (2) has one weak feature
      {4, 5}, {5, 6}, {4, 6, 7}, {6, 7}, {4, 7},  // class 1
  };
  std::vector<int> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  std::vector<NodeId> train = {0, 1, 3, 4, 5, 6, 8, 9};
  std::vector<NodeId> val = {2, 7};
  std::vector<NodeId> test = {2, 7};
  return Graph::build(n, f, c, edges, std::move(feats), std::move(labels), std::move(train),
                      std::move(val), std::move(test));
}

constexpr ga2c::NodeId kToyTarget = 2;

}  // namespace synthetic
