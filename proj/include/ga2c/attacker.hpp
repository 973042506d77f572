#pragma once

// The three attacker networks and the episode runner.
//
//  g_n  node generator: 2 GCLs on the K-order subgraph of the target, readout
//       and target embedding concatenated through W_n^f into per-feature
//       Bernoulli parameters, sampled via the relaxed-sigmoid trick with a
//       straight-through rounding so gradients reach the logits.
//  g_e  edge sampler: 2 GCLs on the whole attacked graph, per-node scores
//       from [x_a || h_node] . W_e plus the target's binary adjacency row as
//       a fixed prior, categorical over unmasked candidates.
//  g_v  value predictor: 2 GCLs on the whole attacked graph, target embedding
//       concatenated with the victim's queried probabilities through W_v,
//       scored as the NLL against the clean predicted class.
//
// The victim is reached exclusively through VictimHandle::query /
// target_loss; episodes cache the latest query so repeated predictions on an
// unchanged graph do not spend extra queries.

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ga2c/checkpoint.hpp"
#include "ga2c/common.hpp"
#include "ga2c/graph.hpp"
#include "ga2c/optim.hpp"
#include "ga2c/tensor.hpp"
#include "ga2c/victim.hpp"

namespace ga2c {

struct PolicyHyper {
  std::size_t K = 2;       // stacked GCLs
  std::size_t d = 64;      // attacker hidden width
  double tau = 1.0;        // Gumbel-Softmax temperature
  double alpha_n = 0.5;    // mixture weight between z_n and the subgraph feature mean
  double bonus = 1.0;      // terminal reward when the prediction flips
};

inline constexpr double kFeatureProbEps = 1e-6;  // clamp for p_i before log

struct GclStack {
  Tensor w0;  // F x d
  Tensor w1;  // d x d
};

struct PolicySet {
  GclStack gn;
  Tensor wn_f;  // 2d x F
  GclStack ge;
  Tensor we;    // F + d
  GclStack gv;
  Tensor wv;    // (d + C) x C
  PolicyHyper hp;

  std::size_t num_features() const { return gn.w0.rows(); }
  std::size_t num_classes() const { return wv.cols(); }

  static PolicySet init(std::size_t num_features, std::size_t num_classes, PolicyHyper hp,
                        std::uint64_t seed) {
    if (hp.K != 2) throw ConfigError("policy stacks are fixed at K = 2 GCLs");
    Rng rng(seed);
    PolicySet p;
    p.hp = hp;
    const std::size_t d = hp.d;
    p.gn.w0 = glorot_uniform(num_features, d, rng);
    p.gn.w1 = glorot_uniform(d, d, rng);
    p.wn_f = glorot_uniform(2 * d, num_features, rng);
    p.ge.w0 = glorot_uniform(num_features, d, rng);
    p.ge.w1 = glorot_uniform(d, d, rng);
    Tensor we_mat = glorot_uniform(num_features + d, 1, rng);
    p.we = Tensor({num_features + d}, we_mat.values(), /*requires_grad=*/true);
    p.gv.w0 = glorot_uniform(num_features, d, rng);
    p.gv.w1 = glorot_uniform(d, d, rng);
    p.wv = glorot_uniform(d + num_classes, num_classes, rng);
    return p;
  }

  std::vector<Tensor> parameters() const {
    return {gn.w0, gn.w1, wn_f, ge.w0, ge.w1, we, gv.w0, gv.w1, wv};
  }

  // Deep copy with fresh storage (used for best-model snapshots).
  PolicySet clone() const {
    PolicySet p = *this;
    p.gn.w0 = gn.w0.clone();
    p.gn.w1 = gn.w1.clone();
    p.wn_f = wn_f.clone();
    p.ge.w0 = ge.w0.clone();
    p.ge.w1 = ge.w1.clone();
    p.we = we.clone();
    p.gv.w0 = gv.w0.clone();
    p.gv.w1 = gv.w1.clone();
    p.wv = wv.clone();
    return p;
  }
};

inline void save_policy(const PolicySet& p, const std::string& path,
                        nlohmann::json extra_meta = {}) {
  Checkpoint ckpt;
  ckpt.kind = "policy";
  ckpt.meta = std::move(extra_meta);
  ckpt.meta["K"] = p.hp.K;
  ckpt.meta["d"] = p.hp.d;
  ckpt.meta["tau"] = p.hp.tau;
  ckpt.meta["alpha_n"] = p.hp.alpha_n;
  ckpt.meta["bonus"] = p.hp.bonus;
  ckpt.add("gn.w0", p.gn.w0);
  ckpt.add("gn.w1", p.gn.w1);
  ckpt.add("wn_f", p.wn_f);
  ckpt.add("ge.w0", p.ge.w0);
  ckpt.add("ge.w1", p.ge.w1);
  ckpt.add("we", p.we);
  ckpt.add("gv.w0", p.gv.w0);
  ckpt.add("gv.w1", p.gv.w1);
  ckpt.add("wv", p.wv);
  save_checkpoint(ckpt, path);
}

inline PolicySet load_policy(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "policy") throw ValidationError("checkpoint kind is not 'policy'");
  PolicySet p;
  p.hp.K = ckpt.meta.value("K", 2);
  p.hp.d = ckpt.meta.value("d", 64);
  p.hp.tau = ckpt.meta.value("tau", 1.0);
  p.hp.alpha_n = ckpt.meta.value("alpha_n", 0.5);
  p.hp.bonus = ckpt.meta.value("bonus", 1.0);
  auto grab = [&](const char* name) {
    Tensor t = ckpt.get(name).clone();
    t.set_requires_grad(true);
    return t;
  };
  p.gn.w0 = grab("gn.w0");
  p.gn.w1 = grab("gn.w1");
  p.wn_f = grab("wn_f");
  p.ge.w0 = grab("ge.w0");
  p.ge.w1 = grab("ge.w1");
  p.we = grab("we");
  p.gv.w0 = grab("gv.w0");
  p.gv.w1 = grab("gv.w1");
  p.wv = grab("wv");
  return p;
}

// Feature matrix of a node set: clean rows as a constant sparse block first,
// injected rows as dense tensors after (gradients flow into those).
struct FeatureView {
  SparseMatrix clean;            // k x F binary
  std::vector<Tensor> inj_rows;  // length-F tensors
};

inline Tensor constant_feature_row(const FeatureVector& active, std::size_t num_features) {
  Tensor t = Tensor::zeros({num_features});
  for (std::uint32_t i : active) t.values()[i] = 1.0;
  return t;
}

// Tensor versions of the overlay's injected rows, detached from any graph.
inline std::vector<Tensor> constant_injected_rows(const AttackedGraph& g) {
  std::vector<Tensor> rows;
  rows.reserve(g.num_injected());
  const NodeId n_clean = static_cast<NodeId>(g.base().num_nodes());
  for (std::size_t k = 0; k < g.num_injected(); ++k)
    rows.push_back(constant_feature_row(g.feature_row(n_clean + static_cast<NodeId>(k)),
                                        g.base().num_features));
  return rows;
}

inline FeatureView full_feature_view(const AttackedGraph& g,
                                     const std::vector<Tensor>& inj_rows) {
  if (inj_rows.size() != g.num_injected())
    throw ShapeError("injected row tensors (" + std::to_string(inj_rows.size()) +
                     ") do not match overlay (" + std::to_string(g.num_injected()) + ")");
  FeatureView view;
  const std::size_t n = g.base().num_nodes();
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t f : g.base().features[i]) trips.emplace_back(i, f, 1.0);
  view.clean = SparseMatrix::from_triplets(n, g.base().num_features, trips);
  view.inj_rows = inj_rows;
  return view;
}

inline FeatureView subgraph_feature_view(const AttackedGraph& g, const SubgraphView& sub,
                                         const std::vector<Tensor>& inj_rows) {
  FeatureView view;
  const NodeId n_clean = static_cast<NodeId>(g.base().num_nodes());
  std::vector<std::tuple<std::size_t, std::size_t, double>> trips;
  std::size_t clean_rows = 0;
  for (std::size_t i = 0; i < sub.size(); ++i) {
    const NodeId v = sub.global[i];
    if (v < n_clean) {
      ++clean_rows;
      for (std::uint32_t f : g.base().features[v]) trips.emplace_back(i, f, 1.0);
    } else {
      view.inj_rows.push_back(inj_rows.at(v - n_clean));
    }
  }
  view.clean = SparseMatrix::from_triplets(clean_rows, g.base().num_features, trips);
  return view;
}

namespace detail {

inline Tensor feature_linear(Tape& tape, const FeatureView& x, const Tensor& w) {
  Tensor clean_part = tape.spmm(x.clean, w);
  if (x.inj_rows.empty()) return clean_part;
  Tensor inj_part = tape.matmul(tape.stack_rows(x.inj_rows), w);
  if (x.clean.rows == 0) return inj_part;
  return tape.vstack(clean_part, inj_part);
}

// Two graph convolutions with ReLU: relu(Ahat (relu(Ahat (X W0))) W1).
inline Tensor gcl_stack(Tape& tape, const GclStack& s, const SparseMatrix& ahat,
                        const FeatureView& x) {
  Tensor h1 = tape.relu(tape.spmm(ahat, feature_linear(tape, x, s.w0)));
  return tape.relu(tape.spmm(ahat, tape.matmul(h1, s.w1)));
}

}  // namespace detail

enum class EpisodeMode { explore, greedy };

struct AdversarialFeatureSample {
  Tensor probs;    // clamped p_i, length F
  Tensor relaxed;  // relaxed Bernoulli sample (explore) or sigmoid(log p / tau) (greedy)
  Tensor hard;     // binary; straight-through in explore mode, mode rounding in greedy
  std::vector<double> noise;  // per-entry Gumbel draws; empty in greedy mode
  bool greedy = false;
};

// Runs g_n on the K-order subgraph of v and samples binary features.
// Forced noise replays a stored episode exactly (the training path).
inline AdversarialFeatureSample generate_node(Tape& tape, const PolicySet& policy,
                                              const AttackedGraph& g, NodeId v,
                                              const std::vector<Tensor>& inj_rows,
                                              EpisodeMode mode, Rng* rng,
                                              const std::vector<double>* forced_noise = nullptr) {
  const std::size_t num_features = policy.num_features();
  SubgraphView sub = k_order_subgraph(g, v, policy.hp.K);
  if (sub.size() == 0) throw EmptyGraphError("empty subgraph in generate_node");
  SparseMatrix ahat = normalize_subgraph(sub);
  FeatureView x = subgraph_feature_view(g, sub, inj_rows);

  Tensor h = detail::gcl_stack(tape, policy.gn, ahat, x);
  Tensor pooled = tape.readout(h, ReadoutMode::column_max);
  Tensor hv = tape.select_row(h, sub.local_of_center);
  Tensor zn = tape.sigmoid(tape.vecmat(tape.concat(pooled, hv), policy.wn_f));

  // Mean input feature vector of the subgraph; the clean part is constant,
  // injected rows keep their gradient path.
  Tensor clean_sum = Tensor::zeros({num_features});
  const NodeId n_clean = static_cast<NodeId>(g.base().num_nodes());
  for (NodeId u : sub.global)
    if (u < n_clean)
      for (std::uint32_t f : g.base().features[u]) clean_sum.values()[f] += 1.0;
  std::vector<Tensor> mean_terms{clean_sum};
  for (const Tensor& row : x.inj_rows) mean_terms.push_back(row);
  Tensor hbar = tape.mul_scalar(tape.add_n(mean_terms), 1.0 / static_cast<double>(sub.size()));

  Tensor p = tape.clamp(tape.add(tape.mul_scalar(zn, policy.hp.alpha_n),
                                 tape.mul_scalar(hbar, 1.0 - policy.hp.alpha_n)),
                        kFeatureProbEps, 1.0 - kFeatureProbEps);

  AdversarialFeatureSample sample;
  sample.probs = p;
  if (mode == EpisodeMode::explore) {
    std::vector<double> noise(num_features);
    if (forced_noise) {
      if (forced_noise->size() != num_features)
        throw ShapeError("forced noise length does not match feature width");
      noise = *forced_noise;
    } else {
      if (!rng) throw ConfigError("explore-mode generation needs an rng");
      for (auto& n : noise) n = rng->gumbel();
    }
    Tensor noise_t = Tensor::row(noise);
    sample.relaxed = tape.sigmoid(
        tape.mul_scalar(tape.add(tape.log(p), noise_t), 1.0 / policy.hp.tau));
    sample.hard = tape.straight_through_round(sample.relaxed);
    sample.noise = std::move(noise);
  } else {
    // Deterministic evaluation: the mode of Bernoulli(p_i). The relaxed
    // values (noise-free) are kept for budget-cap ordering.
    sample.relaxed = tape.sigmoid(tape.mul_scalar(tape.log(p), 1.0 / policy.hp.tau));
    Tensor hard = Tensor::zeros({num_features});
    for (std::size_t i = 0; i < num_features; ++i)
      hard.values()[i] = p.values()[i] >= 0.5 ? 1.0 : 0.0;
    sample.hard = hard;
    sample.greedy = true;
  }
  return sample;
}

struct CappedFeatures {
  Tensor graph_feats;     // what enters the graph and downstream networks
  FeatureVector active;   // sorted active indices of graph_feats
};

// Hard beta_f enforcement at emission: keep the beta_f entries with the
// largest relaxed values (ties by lowest index). The raw straight-through
// sample stays the training signal for the feature loss.
inline CappedFeatures apply_feature_cap(Tape& tape, const AdversarialFeatureSample& s,
                                        int beta_f) {
  CappedFeatures out;
  FeatureVector active;
  for (std::size_t i = 0; i < s.hard.size(); ++i)
    if (s.hard.values()[i] >= 0.5) active.push_back(static_cast<std::uint32_t>(i));
  if (active.size() <= static_cast<std::size_t>(beta_f)) {
    out.graph_feats = s.hard;
    out.active = std::move(active);
    return out;
  }
  std::stable_sort(active.begin(), active.end(), [&](std::uint32_t a, std::uint32_t b) {
    return s.relaxed.values()[a] > s.relaxed.values()[b];
  });
  active.resize(static_cast<std::size_t>(beta_f));
  std::sort(active.begin(), active.end());
  Tensor mask = Tensor::zeros(s.hard.shape());
  for (std::uint32_t i : active) mask.values()[i] = 1.0;
  out.graph_feats = tape.mul(s.hard, mask);
  out.active = std::move(active);
  return out;
}

struct EdgeDistribution {
  Tensor probs;              // over all |V'| nodes; masked entries exactly 0
  std::vector<char> masked;  // 1 where forbidden
};

// Eq.-style edge scores over the full attacked graph. Masked: v_a itself,
// nodes already wired to v_a, and injected nodes whose degree budget is
// exhausted (wiring to them would break the budget indicator).
inline EdgeDistribution edge_distribution(Tape& tape, const PolicySet& policy,
                                          const AttackedGraph& g, NodeId v_a, NodeId target,
                                          const std::vector<Tensor>& inj_rows,
                                          const AttackBudget* budget = nullptr) {
  if (!g.is_injected(v_a))
    throw ConstraintError("edge_distribution origin is not an adversarial node");
  const std::size_t num_features = policy.num_features();
  const std::size_t d = policy.hp.d;
  const std::size_t n = g.num_nodes();
  const NodeId n_clean = static_cast<NodeId>(g.base().num_nodes());

  SparseMatrix ahat = normalize_adjacency(g);
  FeatureView x = full_feature_view(g, inj_rows);
  Tensor h = detail::gcl_stack(tape, policy.ge, ahat, x);

  // Z_e . W_e with Z_e = [x_a || h_row]: the x_a block contributes the same
  // scalar to every row, the h block a per-row score.
  const Tensor& x_a = inj_rows.at(v_a - n_clean);
  Tensor score_xa = tape.dot(x_a, tape.slice(policy.we, 0, num_features));
  Tensor scores = tape.add(tape.matvec(h, tape.slice(policy.we, num_features, d)), score_xa);

  // Prior: the target's binary adjacency row, added verbatim with weight 1.
  Tensor prior = Tensor::zeros({n});
  for (NodeId u : g.neighbors(target)) prior.values()[u] = 1.0;

  std::vector<char> masked(n, 0);
  masked[v_a] = 1;
  for (NodeId u : g.neighbors(v_a)) masked[u] = 1;
  if (budget) {
    for (std::size_t k = 0; k < g.num_injected(); ++k) {
      const NodeId u = n_clean + static_cast<NodeId>(k);
      if (u != v_a && g.degree(u) >= static_cast<std::size_t>(budget->beta_e)) masked[u] = 1;
    }
  }
  bool any_open = false;
  Tensor mask_add = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i])
      mask_add.values()[i] = kNegInf;
    else
      any_open = true;
  }
  if (!any_open) throw NoCandidateError("every wiring candidate is masked");

  Tensor logits = tape.add(tape.add(scores, prior), mask_add);
  EdgeDistribution dist;
  dist.probs = tape.softmax_row(logits);
  dist.masked = std::move(masked);
  return dist;
}

struct EdgeDraw {
  NodeId chosen = 0;
  double logprob = 0.0;  // log of the drawn index's probability
};

inline EdgeDraw sample_edge(const std::vector<double>& dist, Rng& rng) {
  double total = 0.0;
  for (double p : dist) total += p;
  if (!(total > 0.0)) throw NoCandidateError("degenerate all-zero edge distribution");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    last_nonzero = i;
    acc += dist[i];
    if (u < acc) return {static_cast<NodeId>(i), std::log(dist[i])};
  }
  return {static_cast<NodeId>(last_nonzero), std::log(dist[last_nonzero])};
}

inline EdgeDraw argmax_edge(const std::vector<double>& dist) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dist.size(); ++i)
    if (dist[i] > dist[best]) best = i;
  if (!(dist[best] > 0.0)) throw NoCandidateError("degenerate all-zero edge distribution");
  return {static_cast<NodeId>(best), std::log(dist[best])};
}

// g_v(v, G'_t): NLL of log-softmax((H_v(v) || f(v, G'_t)) . W_v) against the
// clean predicted class. cached_query skips the victim query when the caller
// already holds f(v, G'_t) for this exact graph.
inline Tensor predict_value(Tape& tape, const PolicySet& policy, const VictimHandle& victim,
                            NodeId v, const AttackedGraph& g,
                            const std::vector<Tensor>& inj_rows,
                            const ProbVector* cached_query = nullptr) {
  SparseMatrix ahat = normalize_adjacency(g);
  FeatureView x = full_feature_view(g, inj_rows);
  Tensor h = detail::gcl_stack(tape, policy.gv, ahat, x);
  Tensor hv = tape.select_row(h, v);
  ProbVector q = cached_query ? *cached_query : victim.query(v, g);
  Tensor logits = tape.vecmat(tape.concat(hv, Tensor::row(std::move(q))), policy.wv);
  return tape.log_softmax_nll(logits,
                              static_cast<std::size_t>(victim.clean_predicted_label(v)));
}

// Loss delta from one wiring, plus the flip bonus on a successful terminal.
inline double step_reward(const VictimHandle& victim, NodeId v, const AttackedGraph& before,
                          const AttackedGraph& after, bool terminal, bool flipped,
                          double bonus) {
  double r = victim.target_loss(v, after) - victim.target_loss(v, before);
  if (terminal && flipped) r += bonus;
  return r;
}

struct EpisodeStep {
  bool is_node_gen = false;
  AttackedGraph state_before;

  // node-generation fields
  std::vector<double> gumbel_noise;
  FeatureVector emitted_features;

  // edge-wiring fields
  NodeId adv_node = 0;
  NodeId chosen = 0;
  double logprob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  double loss_before = 0.0;
  double loss_after = 0.0;
  ProbVector victim_probs_before;  // query at state_before, reused in replay
};

struct EpisodeTrajectory {
  NodeId target = 0;
  AttackBudget budget;
  std::vector<EpisodeStep> steps;
  bool success = false;
  AttackedGraph final_graph;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int attacked_label = -1;
  std::size_t queries_used = 0;
};

namespace detail {
inline int argmax_prob(const ProbVector& p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] > p[best]) best = j;
  return static_cast<int>(best);
}
}  // namespace detail

// One attack episode: alternate node generation with up to beta_e wirings per
// node, stop early when the prediction flips. The resulting overlay always
// satisfies the budget indicator.
inline EpisodeTrajectory run_episode(const PolicySet& policy, const VictimHandle& victim,
                                     const std::shared_ptr<const Graph>& g_clean, NodeId v,
                                     const AttackBudget& b, EpisodeMode mode, Rng& rng) {
  if (v >= g_clean->num_nodes()) throw IndexError("episode target out of range");
  EpisodeTrajectory traj;
  traj.target = v;
  traj.budget = b;
  AttackedGraph g(g_clean);
  const int clean_label = victim.clean_predicted_label(v);

  Tape tape;
  std::vector<Tensor> x_rows;
  ProbVector last_probs = victim.query(v, g);
  ++traj.queries_used;
  double loss_prev = VictimHandle::loss_from_probs(last_probs, clean_label);
  traj.initial_loss = loss_prev;

  bool flipped = false;
  for (int n_i = 0; n_i < b.beta_n && !flipped; ++n_i) {
    EpisodeStep gen;
    gen.is_node_gen = true;
    gen.state_before = g;
    AdversarialFeatureSample sample = generate_node(tape, policy, g, v, x_rows, mode, &rng);
    CappedFeatures capped = apply_feature_cap(tape, sample, b.beta_f);
    gen.gumbel_noise = sample.noise;
    gen.emitted_features = capped.active;
    auto [g_injected, adv] = inject_node(g, capped.active);
    g = std::move(g_injected);
    x_rows.push_back(capped.graph_feats);
    traj.steps.push_back(std::move(gen));
    // An isolated node cannot move any clean prediction, so last_probs is
    // still the victim's answer for the current graph.

    for (int e_i = 0; e_i < b.beta_e; ++e_i) {
      double value = 0.0;
      if (mode == EpisodeMode::explore) {
        Tensor value_t = predict_value(tape, policy, victim, v, g, x_rows, &last_probs);
        value = value_t.item();
      }
      EdgeDistribution dist;
      try {
        dist = edge_distribution(tape, policy, g, adv, v, x_rows, &b);
      } catch (const NoCandidateError&) {
        break;  // this node cannot be wired further; move to the next injection
      }
      EdgeDraw draw = mode == EpisodeMode::explore ? sample_edge(dist.probs.values(), rng)
                                                   : argmax_edge(dist.probs.values());

      EpisodeStep step;
      step.state_before = g;
      step.adv_node = adv;
      step.chosen = draw.chosen;
      step.logprob = draw.logprob;
      step.value = value;
      step.loss_before = loss_prev;
      step.victim_probs_before = last_probs;

      g = wire_edge(g, adv, draw.chosen);
      ProbVector q = victim.query(v, g);
      ++traj.queries_used;
      const double loss_after = VictimHandle::loss_from_probs(q, clean_label);
      flipped = detail::argmax_prob(q) != clean_label;
      step.loss_after = loss_after;
      step.reward = loss_after - loss_prev + (flipped ? policy.hp.bonus : 0.0);
      traj.steps.push_back(std::move(step));

      last_probs = std::move(q);
      loss_prev = loss_after;
      if (flipped) break;
    }
  }
  traj.success = flipped;
  traj.final_graph = g;
  traj.final_loss = loss_prev;
  traj.attacked_label = detail::argmax_prob(last_probs);
  return traj;
}

}  // namespace ga2c
