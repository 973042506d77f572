#pragma once

// Randomized episode property harness shared by the attacker unit tests and
// the acceptance suite: runs many episodes with random victims, policies,
// graphs, and budgets, and recounts the reward-telescoping, budget, query,
// and receptive-field invariants on every one.

#include <cmath>

#include "ga2c/attacker.hpp"
#include "ga2c/victim.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace episode_props {

struct BatchStats {
  std::size_t episodes = 0;
  std::size_t successes = 0;
  std::size_t telescope_violations = 0;
  double max_telescope_err = 0.0;
  std::size_t budget_violations = 0;
  std::size_t query_bound_violations = 0;
  std::size_t receptive_field_violations = 0;
};

inline BatchStats run_random_episode_batch(std::size_t num_graphs, std::size_t per_graph,
                                           std::uint64_t seed,
                                           ga2c::EpisodeMode mode = ga2c::EpisodeMode::explore) {
  using namespace ga2c;
  BatchStats stats;
  for (std::size_t gi = 0; gi < num_graphs; ++gi) {
    Rng rng(seed + 1000 * gi);
    const std::size_t n = 12 + rng.index(16);
    const std::size_t f = 8 + rng.index(10);
    const std::size_t c = 2 + rng.index(3);
    auto g = synthetic::share(
        synthetic::random_graph(n, f, c, 0.08 + 0.1 * rng.uniform(), 3, seed ^ (7 * gi)));

    GCNModel model = GCNModel::init(f, c, 8, rng);
    auto victim = VictimHandle::seal(std::move(model), g);

    PolicyHyper hp;
    hp.d = 8;  // test-scale width; the paper default is 64
    PolicySet policy = PolicySet::init(f, c, hp, seed ^ (31 * gi));

    for (std::size_t e = 0; e < per_graph; ++e) {
      AttackBudget b(1 + static_cast<int>(rng.index(3)), 1 + static_cast<int>(rng.index(3)),
                     1 + static_cast<int>(rng.index(4)));
      const NodeId target = static_cast<NodeId>(rng.index(n));
      Rng ep_rng = rng.derive(e * 977 + 13);
      EpisodeTrajectory traj = run_episode(policy, *victim, g, target, b, mode, ep_rng);
      ++stats.episodes;
      if (traj.success) ++stats.successes;

      // telescoping: non-bonus rewards sum to the loss delta
      double reward_sum = 0.0;
      for (const auto& s : traj.steps)
        if (!s.is_node_gen) reward_sum += s.reward;
      if (traj.success) reward_sum -= policy.hp.bonus;
      const double err = std::fabs(reward_sum - (traj.final_loss - traj.initial_loss));
      stats.max_telescope_err = std::max(stats.max_telescope_err, err);
      if (err > 1e-9) ++stats.telescope_violations;

      if (!budget_indicator(*g, traj.final_graph, b)) ++stats.budget_violations;

      const std::size_t bound =
          2 * (1 + static_cast<std::size_t>(b.beta_n) * static_cast<std::size_t>(b.beta_e)) + 2;
      if (traj.queries_used > bound) ++stats.query_bound_violations;

      if (traj.success) {
        // a flip requires an injected node inside the victim's 2-hop field
        auto ball = oracles::bfs_ball(traj.final_graph, target, 2);
        bool any_injected = false;
        for (NodeId v : ball)
          if (traj.final_graph.is_injected(v)) any_injected = true;
        if (!any_injected) ++stats.receptive_field_violations;
      }
    }
  }
  return stats;
}

}  // namespace episode_props
