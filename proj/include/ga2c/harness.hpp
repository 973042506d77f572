#pragma once

// Operational surface: attack evaluation over target sets, the three random
// baselines, budget sweeps, embedding dumps for case studies, and the
// one-command manifest runner. Every evaluation attacks each target on a
// fresh overlay of the clean graph; per-target RNG streams derive from the
// config seed and the target id, so GA2C and the baselines see pairwise
// identical randomness on the same targets.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ga2c/attacker.hpp"
#include "ga2c/common.hpp"
#include "ga2c/dataset.hpp"
#include "ga2c/graph.hpp"
#include "ga2c/io_util.hpp"
#include "ga2c/training.hpp"
#include "ga2c/victim.hpp"

namespace ga2c {

inline constexpr const char* kSoftwareVersion = "ga2c-0.1.0";

// Budget flag grammar: "<int>" absolute, "avg" dataset average, "<float>x"
// multiplier of the dataset average (of 1 for beta_n, which is a plain count).
struct BudgetSpec {
  enum class Kind { absolute, average, multiplier };
  Kind kind = Kind::absolute;
  double value = 1.0;

  static BudgetSpec parse(const std::string& text) {
    BudgetSpec s;
    if (text == "avg") {
      s.kind = Kind::average;
      return s;
    }
    try {
      if (!text.empty() && (text.back() == 'x' || text.back() == 'X')) {
        s.kind = Kind::multiplier;
        s.value = std::stod(text.substr(0, text.size() - 1));
      } else {
        s.kind = Kind::absolute;
        s.value = std::stod(text);
      }
    } catch (const std::exception&) {
      throw ConfigError("cannot parse budget spec '" + text + "' (want <int>, avg, or <float>x)");
    }
    if (s.value <= 0.0) throw ConfigError("budget spec must be positive: " + text);
    return s;
  }

  int resolve(double average_base) const {
    double v = value;
    if (kind == Kind::average) v = average_base;
    if (kind == Kind::multiplier) v = value * average_base;
    return std::max(1, static_cast<int>(std::lround(v)));
  }
};

enum class BudgetAxis { beta_n, beta_e, beta_f };

inline BudgetAxis parse_budget_axis(const std::string& s) {
  if (s == "beta_n") return BudgetAxis::beta_n;
  if (s == "beta_e") return BudgetAxis::beta_e;
  if (s == "beta_f") return BudgetAxis::beta_f;
  throw ConfigError("unknown budget axis '" + s + "'");
}

inline AttackBudget resolve_budgets(const BudgetSpec& n, const BudgetSpec& e,
                                    const BudgetSpec& f, const GraphStatistics& stats) {
  if (n.kind == BudgetSpec::Kind::average)
    throw ConfigError("beta_n has no dataset average; give a count or a multiplier");
  return AttackBudget(n.resolve(1.0), e.resolve(stats.mean_degree),
                      f.resolve(stats.mean_feature_sum));
}

struct TargetRecord {
  NodeId target = 0;
  int ground_truth = -1;
  int clean_predicted = -1;
  int attacked_label = -1;
  bool success = false;        // predicted label flipped
  bool correct_after = false;  // attacked prediction equals ground truth
  std::size_t queries = 0;
  std::size_t injected_count = 0;
  std::vector<std::size_t> injected_degrees;
  std::vector<std::size_t> injected_feature_sums;
  bool budget_ok = false;
};

struct AttackReport {
  std::string method;
  AttackBudget budget;
  std::uint64_t seed = 0;
  std::vector<TargetRecord> records;
  double attacked_accuracy = 0.0;  // share of targets still classified correctly
  double clean_accuracy = 0.0;     // clean predictions vs ground truth on these targets
  double flip_rate = 0.0;
  double wall_time_sec = 0.0;

  void finalize() {
    double correct_after = 0, correct_clean = 0, flips = 0;
    for (const auto& r : records) {
      correct_after += r.correct_after ? 1 : 0;
      correct_clean += r.ground_truth >= 0 && r.clean_predicted == r.ground_truth ? 1 : 0;
      flips += r.success ? 1 : 0;
    }
    const double n = static_cast<double>(records.size());
    attacked_accuracy = n > 0 ? correct_after / n : 0.0;
    clean_accuracy = n > 0 ? correct_clean / n : 0.0;
    flip_rate = n > 0 ? flips / n : 0.0;
  }

  nlohmann::json to_json(bool with_wall_time = true) const {
    nlohmann::json j;
    j["method"] = method;
    j["seed"] = seed;
    j["budget"] = {{"beta_n", budget.beta_n}, {"beta_e", budget.beta_e}, {"beta_f", budget.beta_f}};
    j["attacked_accuracy"] = attacked_accuracy;
    j["clean_accuracy"] = clean_accuracy;
    j["flip_rate"] = flip_rate;
    if (with_wall_time) j["wall_time_sec"] = wall_time_sec;
    auto arr = nlohmann::json::array();
    for (const auto& r : records)
      arr.push_back({{"target", r.target},
                     {"ground_truth", r.ground_truth},
                     {"clean_predicted", r.clean_predicted},
                     {"attacked_label", r.attacked_label},
                     {"success", r.success},
                     {"correct_after", r.correct_after},
                     {"queries", r.queries},
                     {"injected_count", r.injected_count},
                     {"injected_degrees", r.injected_degrees},
                     {"injected_feature_sums", r.injected_feature_sums},
                     {"budget_ok", r.budget_ok}});
    j["targets"] = std::move(arr);
    return j;
  }
};

namespace detail {

inline TargetRecord record_from_trajectory(const EpisodeTrajectory& traj, const Graph& clean,
                                           const VictimHandle& victim, const AttackBudget& b) {
  TargetRecord r;
  r.target = traj.target;
  r.ground_truth = clean.labels[traj.target];
  r.clean_predicted = victim.clean_predicted_label(traj.target);
  r.attacked_label = traj.attacked_label;
  r.success = traj.success;
  r.correct_after = r.ground_truth >= 0 && r.attacked_label == r.ground_truth;
  r.queries = traj.queries_used;
  r.injected_count = traj.final_graph.num_injected();
  const NodeId n_clean = static_cast<NodeId>(clean.num_nodes());
  for (std::size_t k = 0; k < r.injected_count; ++k) {
    const NodeId id = n_clean + static_cast<NodeId>(k);
    r.injected_degrees.push_back(traj.final_graph.degree(id));
    r.injected_feature_sums.push_back(traj.final_graph.feature_row(id).size());
  }
  r.budget_ok = budget_indicator(clean, traj.final_graph, b);
  return r;
}

}  // namespace detail

// One greedy GA2C episode per target, each on a fresh overlay.
inline AttackReport evaluate_attack(const PolicySet& policy, const VictimHandle& victim,
                                    const std::shared_ptr<const Graph>& g,
                                    const std::vector<NodeId>& targets, const AttackBudget& b,
                                    std::uint64_t seed, std::size_t threads = 0) {
  if (policy.num_features() != g->num_features || victim.num_features() != g->num_features)
    throw ConfigError("policy/victim dimensions do not match the dataset");
  const auto t0 = std::chrono::steady_clock::now();
  AttackReport report;
  report.method = "ga2c";
  report.budget = b;
  report.seed = seed;
  report.records.resize(targets.size());
  Rng master(seed);
  const std::size_t workers =
      threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  detail::parallel_slots(targets.size(), workers, [&](std::size_t i) {
    Rng rng = master.derive(targets[i]);
    EpisodeTrajectory traj =
        run_episode(policy, victim, g, targets[i], b, EpisodeMode::greedy, rng);
    report.records[i] = detail::record_from_trajectory(traj, *g, victim, b);
  });
  report.finalize();
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

enum class BaselineVariant { random, node_plus_random, random_plus_edge };

inline std::string baseline_name(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::random: return "random";
    case BaselineVariant::node_plus_random: return "node_plus_random";
    case BaselineVariant::random_plus_edge: return "random_plus_edge";
  }
  return "?";
}

inline BaselineVariant parse_baseline(const std::string& s) {
  if (s == "random") return BaselineVariant::random;
  if (s == "node_plus_random") return BaselineVariant::node_plus_random;
  if (s == "random_plus_edge") return BaselineVariant::random_plus_edge;
  throw ConfigError("unknown baseline variant '" + s + "'");
}

namespace detail {

// Exactly beta_f distinct feature indices, uniformly.
inline FeatureVector random_features(std::size_t num_features, int beta_f, Rng& rng) {
  FeatureVector out;
  std::vector<std::uint32_t> pool(num_features);
  for (std::size_t i = 0; i < num_features; ++i) pool[i] = static_cast<std::uint32_t>(i);
  const std::size_t k = std::min<std::size_t>(beta_f, num_features);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(num_features - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// One baseline episode: random wiring draws uniformly from the target and its
// clean first-order neighbors, without duplicates; hybrid variants borrow the
// GA2C node generator or edge sampler (greedy).
inline EpisodeTrajectory baseline_episode(const VictimHandle& victim,
                                          const std::shared_ptr<const Graph>& g, NodeId v,
                                          const AttackBudget& b, BaselineVariant variant,
                                          const PolicySet* policy, Rng& rng) {
  EpisodeTrajectory traj;
  traj.target = v;
  traj.budget = b;
  AttackedGraph ag(g);
  const int clean_label = victim.clean_predicted_label(v);
  ProbVector last_probs = victim.query(v, ag);
  ++traj.queries_used;
  double loss_prev = VictimHandle::loss_from_probs(last_probs, clean_label);
  traj.initial_loss = loss_prev;

  const bool ga2c_features = variant == BaselineVariant::node_plus_random;
  const bool ga2c_edges = variant == BaselineVariant::random_plus_edge;
  if ((ga2c_features || ga2c_edges) && !policy)
    throw ConfigError("baseline variant '" + baseline_name(variant) + "' needs a policy");

  Tape tape;
  std::vector<Tensor> x_rows;
  std::vector<NodeId> random_pool{v};
  for (NodeId u : g->adj[v]) random_pool.push_back(u);

  bool flipped = false;
  for (int n_i = 0; n_i < b.beta_n && !flipped; ++n_i) {
    FeatureVector feats;
    if (ga2c_features) {
      AdversarialFeatureSample sample =
          generate_node(tape, *policy, ag, v, x_rows, EpisodeMode::greedy, nullptr);
      feats = apply_feature_cap(tape, sample, b.beta_f).active;
    } else {
      feats = random_features(g->num_features, b.beta_f, rng);
    }
    auto [ag_next, adv] = inject_node(ag, feats);
    ag = std::move(ag_next);
    x_rows.push_back(constant_feature_row(feats, g->num_features));

    EpisodeStep gen;
    gen.is_node_gen = true;
    gen.emitted_features = feats;
    traj.steps.push_back(std::move(gen));

    for (int e_i = 0; e_i < b.beta_e; ++e_i) {
      NodeId chosen;
      double logprob = 0.0;
      if (ga2c_edges) {
        EdgeDistribution dist;
        try {
          dist = edge_distribution(tape, *policy, ag, adv, v, x_rows, &b);
        } catch (const NoCandidateError&) {
          break;
        }
        EdgeDraw draw = argmax_edge(dist.probs.values());
        chosen = draw.chosen;
        logprob = draw.logprob;
      } else {
        std::vector<NodeId> open;
        for (NodeId u : random_pool)
          if (u != adv && !ag.has_edge(adv, u)) open.push_back(u);
        if (open.empty()) break;
        chosen = open[rng.index(open.size())];
      }
      ag = wire_edge(ag, adv, chosen);
      ProbVector q = victim.query(v, ag);
      ++traj.queries_used;
      const double loss_after = VictimHandle::loss_from_probs(q, clean_label);
      flipped = argmax_prob(q) != clean_label;

      EpisodeStep step;
      step.adv_node = adv;
      step.chosen = chosen;
      step.logprob = logprob;
      step.loss_before = loss_prev;
      step.loss_after = loss_after;
      step.reward = loss_after - loss_prev;
      traj.steps.push_back(std::move(step));
      last_probs = std::move(q);
      loss_prev = loss_after;
      if (flipped) break;
    }
  }
  traj.success = flipped;
  traj.final_graph = ag;
  traj.final_loss = loss_prev;
  traj.attacked_label = argmax_prob(last_probs);
  return traj;
}

}  // namespace detail

inline AttackReport baseline_random(const VictimHandle& victim,
                                    const std::shared_ptr<const Graph>& g,
                                    const std::vector<NodeId>& targets, const AttackBudget& b,
                                    BaselineVariant variant, const PolicySet* policy,
                                    std::uint64_t seed, std::size_t threads = 0) {
  const auto t0 = std::chrono::steady_clock::now();
  AttackReport report;
  report.method = baseline_name(variant);
  report.budget = b;
  report.seed = seed;
  report.records.resize(targets.size());
  Rng master(seed);
  const std::size_t workers =
      threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  detail::parallel_slots(targets.size(), workers, [&](std::size_t i) {
    Rng rng = master.derive(targets[i]);
    EpisodeTrajectory traj =
        detail::baseline_episode(victim, g, targets[i], b, variant, policy, rng);
    report.records[i] = detail::record_from_trajectory(traj, *g, victim, b);
  });
  report.finalize();
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// Formats a double with fixed decimals (deterministic across runs).
inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct SweepPoint {
  double multiplier = 0.0;
  AttackBudget budget;
  AttackReport report;
};

// One evaluation per multiplier along one budget axis; the non-swept budgets
// stay at their defaults (averages, beta_n = 3 unless swept).
inline std::vector<SweepPoint> budget_sweep(const PolicySet& policy, const VictimHandle& victim,
                                            const std::shared_ptr<const Graph>& g,
                                            const std::vector<NodeId>& targets, BudgetAxis axis,
                                            const std::vector<double>& multipliers,
                                            std::uint64_t seed, std::size_t threads = 0,
                                            std::optional<AttackBudget> base = {}) {
  GraphStatistics stats = graph_statistics(*g);
  AttackBudget defaults = base.value_or(
      AttackBudget(3, stats.avg_degree, stats.avg_feature_sum));
  std::vector<SweepPoint> out;
  for (double mult : multipliers) {
    if (mult <= 0.0) throw ConfigError("sweep multipliers must be positive");
    AttackBudget b = defaults;
    switch (axis) {
      case BudgetAxis::beta_n:
        b.beta_n = std::max(1, static_cast<int>(std::lround(mult * 1.0)));
        break;
      case BudgetAxis::beta_e:
        b.beta_e = std::max(1, static_cast<int>(std::lround(mult * stats.mean_degree)));
        break;
      case BudgetAxis::beta_f:
        b.beta_f = std::max(1, static_cast<int>(std::lround(mult * stats.mean_feature_sum)));
        break;
    }
    SweepPoint point;
    point.multiplier = mult;
    point.budget = b;
    point.report = evaluate_attack(policy, victim, g, targets, b, seed, threads);
    out.push_back(std::move(point));
  }
  return out;
}

inline std::string sweep_csv(BudgetAxis axis, const std::vector<SweepPoint>& points) {
  std::ostringstream csv;
  const char* axis_name = axis == BudgetAxis::beta_n   ? "beta_n"
                          : axis == BudgetAxis::beta_e ? "beta_e"
                                                       : "beta_f";
  csv << "axis,multiplier,resolved_value,attacked_accuracy\n";
  for (const auto& p : points) {
    const int resolved = axis == BudgetAxis::beta_n   ? p.budget.beta_n
                         : axis == BudgetAxis::beta_e ? p.budget.beta_e
                                                      : p.budget.beta_f;
    csv << axis_name << ',' << fmt_fixed(p.multiplier, 2) << ',' << resolved << ','
        << fmt_fixed(100.0 * p.report.attacked_accuracy, 2) << '\n';
  }
  return csv.str();
}

// Episode trace export: one JSON line per step.
inline std::string episode_trace_lines(const EpisodeTrajectory& traj) {
  std::ostringstream out;
  for (const auto& s : traj.steps) {
    nlohmann::json j;
    j["target"] = traj.target;
    j["step_type"] = s.is_node_gen ? "generate" : "wire";
    if (s.is_node_gen) {
      j["chosen"] = nullptr;
      j["reward"] = nullptr;
      j["value"] = nullptr;
      j["loss_before"] = nullptr;
      j["loss_after"] = nullptr;
    } else {
      j["chosen"] = s.chosen;
      j["reward"] = s.reward;
      j["value"] = s.value;
      j["loss_before"] = s.loss_before;
      j["loss_after"] = s.loss_after;
    }
    out << j.dump() << '\n';
  }
  return out.str();
}

// Case-study dump: greedy attack on one target, then victim hidden embeddings
// for the four point classes, as CSV for external 2-D projection.
struct CaseStudyResult {
  bool success = false;
  std::string csv;
};

inline CaseStudyResult case_study_dump(const PolicySet& policy, const VictimHandle& victim,
                                       const std::shared_ptr<const Graph>& g, NodeId target,
                                       const AttackBudget& b, std::uint64_t seed) {
  Rng rng = Rng(seed).derive(target);
  EpisodeTrajectory traj = run_episode(policy, victim, g, target, b, EpisodeMode::greedy, rng);

  AttackedGraph clean(g);
  std::vector<NodeId> neighbors = g->adj[target];
  std::vector<NodeId> injected;
  const NodeId n_clean = static_cast<NodeId>(g->num_nodes());
  for (std::size_t k = 0; k < traj.final_graph.num_injected(); ++k)
    injected.push_back(n_clean + static_cast<NodeId>(k));

  Tensor before = VictimInspector::dump_embeddings(victim, {target}, clean);
  std::vector<NodeId> after_nodes{target};
  after_nodes.insert(after_nodes.end(), neighbors.begin(), neighbors.end());
  after_nodes.insert(after_nodes.end(), injected.begin(), injected.end());
  Tensor after = VictimInspector::dump_embeddings(victim, after_nodes, traj.final_graph);

  std::ostringstream csv;
  const std::size_t d = before.cols();
  csv << "node_id,role";
  for (std::size_t j = 0; j < d; ++j) csv << ",e" << j;
  csv << '\n';
  auto emit = [&](NodeId node, const char* role, const Tensor& m, std::size_t row) {
    csv << node << ',' << role;
    for (std::size_t j = 0; j < d; ++j) csv << ',' << fmt_fixed(m(row, j), 9);
    csv << '\n';
  };
  emit(target, "target_before", before, 0);
  emit(target, "target_after", after, 0);
  for (std::size_t i = 0; i < neighbors.size(); ++i)
    emit(neighbors[i], "neighbor", after, 1 + i);
  for (std::size_t i = 0; i < injected.size(); ++i)
    emit(injected[i], "injected", after, 1 + neighbors.size() + i);

  CaseStudyResult result;
  result.success = traj.success;
  result.csv = csv.str();
  return result;
}

}  // namespace ga2c
