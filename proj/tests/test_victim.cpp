#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <type_traits>

#include "ga2c/victim.hpp"
#include "synthetic.hpp"

using namespace ga2c;

namespace {

// Detection idiom: these expressions must not compile against VictimHandle's
// public surface. Access to the sealed model, parameters, or gradients from
// the attacker side has no public path.
template <typename T, typename = void>
struct has_model : std::false_type {};
template <typename T>
struct has_model<T, std::void_t<decltype(std::declval<T&>().model())>> : std::true_type {};

template <typename T, typename = void>
struct has_parameters : std::false_type {};
template <typename T>
struct has_parameters<T, std::void_t<decltype(std::declval<T&>().parameters())>>
    : std::true_type {};

template <typename T, typename = void>
struct has_weights : std::false_type {};
template <typename T>
struct has_weights<T, std::void_t<decltype(std::declval<T&>().weights())>> : std::true_type {};

template <typename T, typename = void>
struct has_gradients : std::false_type {};
template <typename T>
struct has_gradients<T, std::void_t<decltype(std::declval<T&>().gradients())>>
    : std::true_type {};

template <typename T, typename = void>
struct has_dump_embeddings : std::false_type {};
template <typename T>
struct has_dump_embeddings<
    T, std::void_t<decltype(std::declval<T&>().dump_embeddings(
           std::declval<std::vector<NodeId>>(), std::declval<AttackedGraph>()))>>
    : std::true_type {};

static_assert(!has_model<VictimHandle>::value);
static_assert(!has_parameters<VictimHandle>::value);
static_assert(!has_weights<VictimHandle>::value);
static_assert(!has_gradients<VictimHandle>::value);
static_assert(!has_dump_embeddings<VictimHandle>::value);  // harness-only, via the inspector
static_assert(!std::is_copy_constructible_v<VictimHandle>);

std::shared_ptr<VictimHandle> toy_victim(std::uint64_t seed = 0) {
  auto g = synthetic::share(synthetic::toy_planted());
  VictimTrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 120;
  return train_victim(g, cfg);
}

}  // namespace

TEST_CASE("gcn_forward zero weights gives uniform rows") {
  auto g = synthetic::share(synthetic::random_graph(8, 5, 3, 0.3, 2, 2));
  GCNModel m;
  m.w0 = Tensor::zeros({5, 4});
  m.w1 = Tensor::zeros({4, 3});
  Tensor probs = gcn_forward(m, AttackedGraph(g));
  REQUIRE(probs.rows() == 8);
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(probs(i, j) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("gcn_forward matches the two-matmul hand oracle on one node") {
  Graph g1 = Graph::build(1, 4, 3, {}, {{0, 2}}, {0});
  auto g = synthetic::share(std::move(g1));
  Rng rng(5);
  GCNModel m = GCNModel::init(4, 3, 6, rng);
  Tensor probs = gcn_forward(m, AttackedGraph(g));

  // hand computation: x normalized to sum 1, Ahat = [1]
  std::vector<double> x = {0.5, 0.0, 0.5, 0.0};
  std::vector<double> h(6, 0.0);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 6; ++j) h[j] += x[k] * m.w0(k, j);
  for (auto& v : h) v = std::max(0.0, v);
  std::vector<double> logits(3, 0.0);
  for (int k = 0; k < 6; ++k)
    for (int j = 0; j < 3; ++j) logits[j] += h[k] * m.w1(k, j);
  double mx = std::max({logits[0], logits[1], logits[2]});
  double z = 0;
  for (double l : logits) z += std::exp(l - mx);
  for (int j = 0; j < 3; ++j)
    CHECK(probs(0, j) == Catch::Approx(std::exp(logits[j] - mx) / z).epsilon(1e-12));
}

TEST_CASE("gcn_forward row-stochastic and permutation-equivariant") {
  auto g = synthetic::share(synthetic::random_graph(12, 6, 3, 0.25, 2, 3));
  Rng rng(9);
  GCNModel m = GCNModel::init(6, 3, 5, rng);
  Tensor probs = gcn_forward(m, AttackedGraph(g));
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < probs.cols(); ++j) s += probs(i, j);
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }

  // relabel nodes by a rotation; output rows must permute identically
  const std::size_t n = g->num_nodes();
  auto perm = [n](NodeId v) { return static_cast<NodeId>((v + 5) % n); };
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v : g->adj[u])
      if (u < v) edges.emplace_back(perm(u), perm(v));
  std::vector<FeatureVector> feats(n);
  std::vector<int> labels(n);
  for (NodeId u = 0; u < n; ++u) {
    feats[perm(u)] = g->features[u];
    labels[perm(u)] = g->labels[u];
  }
  auto gp = synthetic::share(Graph::build(n, 6, 3, edges, std::move(feats), std::move(labels)));
  Tensor probs_p = gcn_forward(m, AttackedGraph(gp));
  for (NodeId u = 0; u < n; ++u)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(probs(u, j) == Catch::Approx(probs_p(perm(u), j)).margin(1e-9));

  // feature width mismatch
  auto g_wide = synthetic::share(synthetic::random_graph(4, 9, 3, 0.3, 2, 4));
  CHECK_THROWS_AS(gcn_forward(m, AttackedGraph(g_wide)), ShapeError);
}

TEST_CASE("train_victim requires splits and is deterministic") {
  Graph no_splits = Graph::build(4, 3, 2, {{0, 1}}, {{0}, {1}, {2}, {0}}, {0, 1, 0, 1});
  CHECK_THROWS_AS(train_victim(synthetic::share(std::move(no_splits)), {}), ConfigError);

  auto h1 = toy_victim(7);
  auto h2 = toy_victim(7);
  CHECK(VictimInspector::model(*h1).w0.values() == VictimInspector::model(*h2).w0.values());
  CHECK(VictimInspector::model(*h1).w1.values() == VictimInspector::model(*h2).w1.values());

  auto h3 = toy_victim(8);
  CHECK(VictimInspector::model(*h1).w0.values() != VictimInspector::model(*h3).w0.values());
}

TEST_CASE("trained victim separates an easy community graph") {
  auto g = synthetic::share(synthetic::sbm_graph(30, 3, 30, 0.15, 0.01, 4, 17));
  VictimTrainConfig cfg;
  cfg.seed = 1;
  cfg.epochs = 150;
  auto victim = train_victim(g, cfg);
  CHECK(VictimInspector::clean_test_accuracy(*victim) > 0.8);
}

TEST_CASE("query consistency, counting, and isolation") {
  auto g = synthetic::share(synthetic::toy_planted());
  auto victim = toy_victim();
  AttackedGraph clean(g);

  const std::size_t c0 = victim->query_count();
  ProbVector q1 = victim->query(2, clean);
  ProbVector q2 = victim->query(2, clean);
  CHECK(victim->query_count() == c0 + 2);
  CHECK(q1 == q2);  // bitwise

  // clean query equals the sealed clean prediction cache
  Tensor full = gcn_forward(VictimInspector::model(*victim), clean);
  for (std::size_t j = 0; j < q1.size(); ++j)
    CHECK(q1[j] == Catch::Approx(full(2, j)).margin(0));

  // an isolated injected node changes nothing for any clean node
  auto [gi, adv] = inject_node(clean, {4, 5});
  for (NodeId v = 0; v < g->num_nodes(); ++v) {
    ProbVector before = victim->query(v, clean);
    ProbVector after = victim->query(v, gi);
    for (std::size_t j = 0; j < before.size(); ++j)
      CHECK(std::fabs(before[j] - after[j]) < 1e-12);
  }
  (void)adv;
}

TEST_CASE("target_loss recompute oracle") {
  auto g = synthetic::share(synthetic::toy_planted());
  auto victim = toy_victim();
  auto [gi, adv] = inject_node(AttackedGraph(g), {4, 5});
  AttackedGraph wired = wire_edge(gi, adv, 2);

  for (NodeId v : {NodeId(0), NodeId(2), NodeId(7)}) {
    const double loss = victim->target_loss(v, wired);
    ProbVector q = victim->query(v, wired);
    const int label = victim->clean_predicted_label(v);
    CHECK(loss == Catch::Approx(-std::log(q[label])).epsilon(1e-12));
  }

  // clean graph: loss is -log of the cached confidence
  ProbVector qc = victim->query(2, AttackedGraph(g));
  CHECK(victim->target_loss(2, AttackedGraph(g)) ==
        Catch::Approx(-std::log(qc[victim->clean_predicted_label(2)])).epsilon(1e-12));
}

TEST_CASE("receptive field: edits beyond 2 hops never move a query") {
  // path 0-1-2-3-4-5-6: node 0's 2-hop ball is {0,1,2}; wiring at node 5
  // (distance 5) must leave node 0's prediction bit-identical.
  Graph pg = Graph::build(
      7, 4, 2, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}},
      {{0}, {1}, {2}, {3}, {0, 1}, {1, 2}, {2, 3}}, {0, 0, 0, 1, 1, 1, 1},
      {0, 3, 5}, {1, 4}, {2, 6});
  auto g = synthetic::share(std::move(pg));
  VictimTrainConfig cfg;
  cfg.epochs = 60;
  auto victim = train_victim(g, cfg);

  AttackedGraph clean(g);
  ProbVector before = victim->query(0, clean);
  auto [gi, adv] = inject_node(clean, {0, 3});
  AttackedGraph far = wire_edge(gi, adv, 5);
  ProbVector after = victim->query(0, far);
  for (std::size_t j = 0; j < before.size(); ++j)
    CHECK(std::fabs(before[j] - after[j]) < 1e-12);

  // wiring inside the receptive field does move it
  AttackedGraph near = wire_edge(gi, adv, 1);
  ProbVector moved = victim->query(0, near);
  double diff = 0;
  for (std::size_t j = 0; j < before.size(); ++j) diff += std::fabs(moved[j] - before[j]);
  CHECK(diff > 0.0);
}

TEST_CASE("dump_embeddings") {
  auto g = synthetic::share(synthetic::toy_planted());
  auto victim = toy_victim();
  AttackedGraph clean(g);

  Tensor emb = VictimInspector::dump_embeddings(*victim, {2, 5}, clean);
  CHECK(emb.rows() == 2);
  CHECK(emb.cols() == VictimInspector::model(*victim).hidden());

  // attacking next to the target moves its hidden embedding
  auto [gi, adv] = inject_node(clean, {4, 5});
  AttackedGraph wired = wire_edge(gi, adv, 2);
  Tensor before = VictimInspector::dump_embeddings(*victim, {2}, clean);
  Tensor after = VictimInspector::dump_embeddings(*victim, {2}, wired);
  double diff = 0;
  for (std::size_t j = 0; j < before.cols(); ++j) diff += std::fabs(after(0, j) - before(0, j));
  CHECK(diff > 0.0);

  // nodes outside the injected node's receptive field keep their embeddings:
  // node 9 is 3 hops from the target bridge
  Tensor far_before = VictimInspector::dump_embeddings(*victim, {9}, clean);
  Tensor far_after = VictimInspector::dump_embeddings(*victim, {9}, wired);
  for (std::size_t j = 0; j < far_before.cols(); ++j)
    CHECK(far_before(0, j) == far_after(0, j));
}
