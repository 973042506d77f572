#pragma once

// Graph data model and attack-time mutation. The clean Graph is immutable
// after construction; AttackedGraph is a cheap persistent overlay (base +
// injected deltas), so holding an earlier overlay value still sees the
// pre-mutation state after inject_node / wire_edge.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ga2c/common.hpp"
#include "ga2c/tensor.hpp"

namespace ga2c {

using FeatureVector = std::vector<std::uint32_t>;  // sorted active indices

struct Graph {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<std::vector<NodeId>> adj;     // sorted, symmetric, no self-loops
  std::vector<FeatureVector> features;      // one sorted index list per node
  std::vector<int> labels;                  // -1 when unknown
  std::vector<NodeId> train_idx, val_idx, test_idx;

  std::size_t num_nodes() const { return adj.size(); }

  std::size_t num_edges() const {
    std::size_t deg_sum = 0;
    for (const auto& nbrs : adj) deg_sum += nbrs.size();
    return deg_sum / 2;
  }

  bool has_edge(NodeId a, NodeId b) const {
    const auto& nbrs = adj[a];
    return std::binary_search(nbrs.begin(), nbrs.end(), b);
  }

  static Graph build(std::size_t num_nodes, std::size_t num_features,
                     std::size_t num_classes,
                     const std::vector<std::pair<NodeId, NodeId>>& edges,
                     std::vector<FeatureVector> features, std::vector<int> labels,
                     std::vector<NodeId> train_idx = {}, std::vector<NodeId> val_idx = {},
                     std::vector<NodeId> test_idx = {}) {
    Graph g;
    g.num_features = num_features;
    g.num_classes = num_classes;
    g.adj.assign(num_nodes, {});
    for (auto [u, v] : edges) {
      if (u >= num_nodes || v >= num_nodes)
        throw ValidationError("edge endpoint out of range: (" + std::to_string(u) + "," +
                              std::to_string(v) + ")");
      if (u == v) throw ValidationError("self-loop in edge list at node " + std::to_string(u));
      g.adj[u].push_back(v);
      g.adj[v].push_back(u);
    }
    for (auto& nbrs : g.adj) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    if (features.size() != num_nodes)
      throw ValidationError("feature row count does not match node count");
    for (auto& row : features) {
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
      if (!row.empty() && row.back() >= num_features)
        throw ValidationError("feature index " + std::to_string(row.back()) +
                              " out of range " + std::to_string(num_features));
    }
    g.features = std::move(features);
    if (labels.empty()) labels.assign(num_nodes, -1);
    if (labels.size() != num_nodes)
      throw ValidationError("label count does not match node count");
    for (int y : labels)
      if (y >= static_cast<int>(num_classes))
        throw ValidationError("label " + std::to_string(y) + " out of range");
    g.labels = std::move(labels);
    auto check_split = [&](const std::vector<NodeId>& idx, const char* name) {
      for (NodeId v : idx)
        if (v >= num_nodes)
          throw ValidationError(std::string(name) + " split references node " +
                                std::to_string(v) + " out of range");
    };
    check_split(train_idx, "train");
    check_split(val_idx, "val");
    check_split(test_idx, "test");
    g.train_idx = std::move(train_idx);
    g.val_idx = std::move(val_idx);
    g.test_idx = std::move(test_idx);
    return g;
  }
};

struct AttackBudget {
  int beta_n = 1;  // max injected nodes per target
  int beta_e = 1;  // max degree per injected node
  int beta_f = 1;  // max active features per injected node

  AttackBudget() = default;
  AttackBudget(int n, int e, int f) : beta_n(n), beta_e(e), beta_f(f) {
    if (n <= 0 || e <= 0 || f <= 0)
      throw ValidationError("attack budgets must be strictly positive");
  }
};

// Overlay of a clean graph: injected nodes get ids N, N+1, ... and the base
// is never mutated. Injected edges always touch at least one injected node.
class AttackedGraph {
 public:
  AttackedGraph() = default;
  explicit AttackedGraph(std::shared_ptr<const Graph> base) : base_(std::move(base)) {
    if (!base_) throw ValidationError("attacked graph needs a base graph");
  }

  const Graph& base() const { return *base_; }
  const std::shared_ptr<const Graph>& base_ptr() const { return base_; }

  std::size_t num_nodes() const { return base_->num_nodes() + injected_features_.size(); }
  std::size_t num_injected() const { return injected_features_.size(); }
  const std::vector<FeatureVector>& injected_features() const { return injected_features_; }
  const std::vector<std::pair<NodeId, NodeId>>& injected_edges() const {
    return injected_edges_;
  }

  bool is_injected(NodeId v) const { return v >= base_->num_nodes() && v < num_nodes(); }

  const FeatureVector& feature_row(NodeId v) const {
    if (v < base_->num_nodes()) return base_->features[v];
    if (!is_injected(v)) throw IndexError("node id out of range: " + std::to_string(v));
    return injected_features_[v - base_->num_nodes()];
  }

  std::size_t degree(NodeId v) const {
    std::size_t d = v < base_->num_nodes() ? base_->adj[v].size() : 0;
    for (const auto& [a, b] : injected_edges_) d += (a == v) + (b == v);
    return d;
  }

  std::vector<NodeId> neighbors(NodeId v) const {
    if (v >= num_nodes()) throw IndexError("node id out of range: " + std::to_string(v));
    std::vector<NodeId> out;
    if (v < base_->num_nodes()) out = base_->adj[v];
    for (const auto& [a, b] : injected_edges_) {
      if (a == v) out.push_back(b);
      if (b == v) out.push_back(a);
    }
    return out;
  }

  bool has_edge(NodeId a, NodeId b) const {
    if (a < base_->num_nodes() && b < base_->num_nodes() && base_->has_edge(a, b)) return true;
    for (const auto& [x, y] : injected_edges_)
      if ((x == a && y == b) || (x == b && y == a)) return true;
    return false;
  }

  friend std::pair<AttackedGraph, NodeId> inject_node(const AttackedGraph& g,
                                                      const FeatureVector& x_a);
  friend AttackedGraph wire_edge(const AttackedGraph& g, NodeId a, NodeId b);

 private:
  std::shared_ptr<const Graph> base_;
  std::vector<FeatureVector> injected_features_;
  std::vector<std::pair<NodeId, NodeId>> injected_edges_;  // (adversarial, other)
};

// D^{-1/2} (A + I) D^{-1/2}: entry (i,j) = 1 / sqrt((d_i + 1)(d_j + 1)) for
// every edge and every diagonal position. Isolated nodes keep their self-loop.
inline SparseMatrix normalize_adjacency(const AttackedGraph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(i)) + 1));
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t i = 0; i < n; ++i) {
    auto nbrs = g.neighbors(static_cast<NodeId>(i));
    std::sort(nbrs.begin(), nbrs.end());
    bool diag_done = false;
    for (NodeId j : nbrs) {
      if (!diag_done && j > i) {
        trips.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
        diag_done = true;
      }
      trips.emplace_back(i, j, inv_sqrt[i] * inv_sqrt[j]);
    }
    if (!diag_done) trips.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
  }
  return SparseMatrix::from_triplets(n, n, trips);
}

inline SparseMatrix normalize_adjacency(const std::shared_ptr<const Graph>& g) {
  return normalize_adjacency(AttackedGraph(g));
}

// Induced subgraph on every node within K hops of v, plus the map back to
// global ids. Local ordering: clean nodes ascending, then injected ascending,
// which matches how feature matrices are assembled elsewhere.
struct SubgraphView {
  std::vector<NodeId> global;                          // local -> global
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // local undirected pairs
  std::size_t local_of_center = 0;

  std::size_t size() const { return global.size(); }

  std::size_t local_of(NodeId v) const {
    auto it = std::find(global.begin(), global.end(), v);
    if (it == global.end()) throw IndexError("node not in subgraph");
    return static_cast<std::size_t>(it - global.begin());
  }
};

inline SubgraphView k_order_subgraph(const AttackedGraph& g, NodeId v, std::size_t K) {
  if (v >= g.num_nodes()) throw IndexError("subgraph center out of range: " + std::to_string(v));
  std::vector<char> seen(g.num_nodes(), 0);
  std::queue<std::pair<NodeId, std::size_t>> frontier;
  frontier.push({v, 0});
  seen[v] = 1;
  std::vector<NodeId> nodes{v};
  while (!frontier.empty()) {
    auto [u, depth] = frontier.front();
    frontier.pop();
    if (depth == K) continue;
    for (NodeId w : g.neighbors(u)) {
      if (seen[w]) continue;
      seen[w] = 1;
      nodes.push_back(w);
      frontier.push({w, depth + 1});
    }
  }
  const NodeId n_clean = static_cast<NodeId>(g.base().num_nodes());
  std::sort(nodes.begin(), nodes.end(), [&](NodeId a, NodeId b) {
    const bool ia = a >= n_clean, ib = b >= n_clean;
    if (ia != ib) return ib;  // clean nodes first
    return a < b;
  });
  SubgraphView view;
  view.global = std::move(nodes);
  view.local_of_center = view.local_of(v);
  std::vector<std::size_t> local(g.num_nodes(), SIZE_MAX);
  for (std::size_t i = 0; i < view.global.size(); ++i) local[view.global[i]] = i;
  for (std::size_t i = 0; i < view.global.size(); ++i)
    for (NodeId w : g.neighbors(view.global[i]))
      if (local[w] != SIZE_MAX && local[w] > i) view.edges.emplace_back(i, local[w]);
  return view;
}

// Normalized adjacency of a subgraph view (degrees counted inside the view).
inline SparseMatrix normalize_subgraph(const SubgraphView& view) {
  const std::size_t n = view.size();
  std::vector<std::size_t> deg(n, 0);
  for (auto [a, b] : view.edges) {
    deg[a]++;
    deg[b]++;
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i].emplace_back(i, inv_sqrt[i] * inv_sqrt[i]);
  for (auto [a, b] : view.edges) {
    rows[a].emplace_back(b, inv_sqrt[a] * inv_sqrt[b]);
    rows[b].emplace_back(a, inv_sqrt[a] * inv_sqrt[b]);
  }
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t i = 0; i < n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    for (auto [j, val] : rows[i]) trips.emplace_back(i, j, val);
  }
  return SparseMatrix::from_triplets(n, n, trips);
}

inline std::pair<AttackedGraph, NodeId> inject_node(const AttackedGraph& g,
                                                    const FeatureVector& x_a) {
  FeatureVector row = x_a;
  std::sort(row.begin(), row.end());
  if (std::adjacent_find(row.begin(), row.end()) != row.end())
    throw ValidationError("injected feature vector has duplicate indices");
  if (!row.empty() && row.back() >= g.base().num_features)
    throw ValidationError("injected feature index out of range");
  AttackedGraph out = g;
  const NodeId id = static_cast<NodeId>(out.num_nodes());
  out.injected_features_.push_back(std::move(row));
  return {std::move(out), id};
}

inline AttackedGraph wire_edge(const AttackedGraph& g, NodeId a, NodeId b) {
  if (!g.is_injected(a))
    throw ConstraintError("wire_edge origin " + std::to_string(a) +
                          " is not an adversarial node");
  if (b >= g.num_nodes()) throw IndexError("wire_edge endpoint out of range");
  if (a == b) throw ConstraintError("wire_edge would create a self-loop");
  if (g.has_edge(a, b))
    throw ConstraintError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                          ") already present");
  AttackedGraph out = g;
  out.injected_edges_.emplace_back(a, b);
  return out;
}

// The three-factor budget indicator: node count, per-node degree, per-node
// feature count. All limits are hard.
inline bool budget_indicator(const Graph& clean, const AttackedGraph& attacked,
                             const AttackBudget& b) {
  if (&attacked.base() != &clean)
    throw ValidationError("attacked graph does not derive from the given clean graph");
  if (attacked.num_injected() > static_cast<std::size_t>(b.beta_n)) return false;
  const NodeId n_clean = static_cast<NodeId>(clean.num_nodes());
  for (std::size_t k = 0; k < attacked.num_injected(); ++k) {
    const NodeId id = n_clean + static_cast<NodeId>(k);
    if (attacked.degree(id) > static_cast<std::size_t>(b.beta_e)) return false;
    if (attacked.feature_row(id).size() > static_cast<std::size_t>(b.beta_f)) return false;
  }
  return true;
}

struct GraphStatistics {
  std::size_t num_nodes = 0;
  std::size_t num_edges = 0;
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  double mean_degree = 0.0;
  double mean_feature_sum = 0.0;
  int avg_degree = 1;       // rounded, used as the beta_e default
  int avg_feature_sum = 1;  // rounded, used as the beta_f default
};

inline GraphStatistics graph_statistics(const Graph& g) {
  if (g.num_nodes() == 0) throw EmptyGraphError("statistics of an empty graph");
  GraphStatistics s;
  s.num_nodes = g.num_nodes();
  s.num_edges = g.num_edges();
  s.num_features = g.num_features;
  s.num_classes = g.num_classes;
  s.mean_degree = 2.0 * static_cast<double>(s.num_edges) / static_cast<double>(s.num_nodes);
  std::size_t ones = 0;
  for (const auto& row : g.features) ones += row.size();
  s.mean_feature_sum = static_cast<double>(ones) / static_cast<double>(s.num_nodes);
  s.avg_degree = std::max(1, static_cast<int>(std::lround(s.mean_degree)));
  s.avg_feature_sum = std::max(1, static_cast<int>(std::lround(s.mean_feature_sum)));
  return s;
}

}  // namespace ga2c
