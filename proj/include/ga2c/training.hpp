#pragma once

// A2C training: experience replay over edge-wiring triplets (G'_t, a_t, R_t),
// Monte-Carlo discounted returns, and the three losses
//   L_p = -log p(a_t | G'_t) . (R_t - g_v)   (advantage frozen w.r.t. g_v)
//   L_v = |g_v - R_t|
//   L_f = ((sum x_a) - beta_f)^2             (on the raw straight-through sum)
// summed over the buffer for one Adam step per batch. Replay is on-policy:
// the buffer lives for exactly one batch and gradients are recomputed by
// re-running the forward passes on the stored states (stored Gumbel noise
// reproduces every feature sample bit-for-bit).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <future>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ga2c/attacker.hpp"
#include "ga2c/common.hpp"
#include "ga2c/graph.hpp"
#include "ga2c/optim.hpp"
#include "ga2c/tensor.hpp"
#include "ga2c/victim.hpp"

namespace ga2c {

// R_t = sum_{j >= t} r_j gamma^(j - t), computed right-to-left.
inline std::vector<double> compute_returns(const std::vector<double>& rewards, double gamma) {
  if (rewards.empty()) throw EmptyInputError("compute_returns on an empty reward list");
  std::vector<double> returns(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    returns[i] = acc;
  }
  return returns;
}

inline Tensor policy_loss(Tape& tape, const Tensor& logprob, double ret, double value) {
  return tape.mul_scalar(logprob, -(ret - value));
}

inline Tensor value_loss(Tape& tape, const Tensor& value, double ret) {
  return tape.abs(tape.sub(value, Tensor::scalar(ret)));
}

inline Tensor feature_loss(Tape& tape, const Tensor& hard_sample, int beta_f) {
  return tape.square(tape.add_scalar(tape.sum(hard_sample), -static_cast<double>(beta_f)));
}

struct ReplayTriplet {
  std::size_t episode = 0;  // index into ReplayBuffer::episodes
  std::size_t step = 0;     // index of the edge-wiring step inside that episode
  double ret = 0.0;         // R_t
  double value = 0.0;       // rollout-time g_v (the frozen advantage baseline)
  double logprob = 0.0;     // rollout-time log p(a_t | G'_t)
};

// Holds one batch of explore-mode episodes. Only edge-wiring actions become
// triplets; node generations ride along as metadata for the replay pass.
class ReplayBuffer {
 public:
  const std::vector<EpisodeTrajectory>& episodes() const { return episodes_; }
  const std::vector<ReplayTriplet>& triplets() const { return triplets_; }
  std::size_t size() const { return triplets_.size(); }
  bool empty() const { return episodes_.empty(); }

  void add_episode(EpisodeTrajectory traj, double gamma) {
    std::vector<double> rewards;
    std::vector<std::size_t> steps;
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      if (traj.steps[i].is_node_gen) continue;
      rewards.push_back(traj.steps[i].reward);
      steps.push_back(i);
    }
    const std::size_t ep = episodes_.size();
    if (!rewards.empty()) {
      std::vector<double> returns = compute_returns(rewards, gamma);
      for (std::size_t k = 0; k < steps.size(); ++k)
        triplets_.push_back({ep, steps[k], returns[k], traj.steps[steps[k]].value,
                             traj.steps[steps[k]].logprob});
    }
    episodes_.push_back(std::move(traj));
  }

  void clear() {
    episodes_.clear();
    triplets_.clear();
  }

 private:
  std::vector<EpisodeTrajectory> episodes_;
  std::vector<ReplayTriplet> triplets_;
};

struct TrainConfig {
  double gamma = 0.95;
  std::size_t batch_size = 10;
  double lr = 1e-3;
  std::size_t patience = 100;   // epochs without probe improvement before stopping
  std::size_t max_epochs = 500;
  std::uint64_t seed = 0;
  std::size_t probe_size = 0;   // 0 = automatic
  std::size_t threads = 0;      // 0 = hardware concurrency

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("discount must be in (0, 1]");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

struct TrainStepReport {
  double mean_policy_loss = 0.0;
  double mean_value_loss = 0.0;
  double mean_feature_loss = 0.0;
  double total_loss = 0.0;
  std::size_t num_triplets = 0;
  std::size_t num_feature_samples = 0;
};

// One batched update: recompute forward passes over every stored state, sum
// L_v + L_p over triplets plus L_f over feature samples, backprop, one Adam
// step over all three networks, clear the buffer.
inline TrainStepReport train_step(PolicySet& policy, ReplayBuffer& buffer,
                                  const VictimHandle& victim, AdamOptimizer& adam,
                                  const TrainConfig& config) {
  config.validate();
  if (buffer.empty()) throw EmptyInputError("train_step on an empty replay buffer");

  Tape tape;
  std::vector<Tensor> loss_terms;
  TrainStepReport report;
  double lp_sum = 0.0, lv_sum = 0.0, lf_sum = 0.0;

  std::size_t cursor = 0;  // triplets are stored in episode-step order
  for (std::size_t ep = 0; ep < buffer.episodes().size(); ++ep) {
    const EpisodeTrajectory& traj = buffer.episodes()[ep];
    std::vector<Tensor> x_rows;
    for (std::size_t si = 0; si < traj.steps.size(); ++si) {
      const EpisodeStep& step = traj.steps[si];
      if (step.is_node_gen) {
        AdversarialFeatureSample sample =
            generate_node(tape, policy, step.state_before, traj.target, x_rows,
                          EpisodeMode::explore, nullptr, &step.gumbel_noise);
        CappedFeatures capped = apply_feature_cap(tape, sample, traj.budget.beta_f);
        if (capped.active != step.emitted_features)
          throw TrainingError("replayed feature sample diverged from the rollout");
        x_rows.push_back(capped.graph_feats);
        Tensor lf = feature_loss(tape, sample.hard, traj.budget.beta_f);
        lf_sum += lf.item();
        ++report.num_feature_samples;
        loss_terms.push_back(std::move(lf));
      } else {
        if (cursor >= buffer.triplets().size() || buffer.triplets()[cursor].episode != ep ||
            buffer.triplets()[cursor].step != si)
          throw TrainingError("replay buffer triplets are out of order");
        const ReplayTriplet& trip = buffer.triplets()[cursor++];

        EdgeDistribution dist = edge_distribution(tape, policy, step.state_before,
                                                  step.adv_node, traj.target, x_rows,
                                                  &traj.budget);
        Tensor logprob = tape.log(tape.select_index(dist.probs, step.chosen));
        Tensor lp = policy_loss(tape, logprob, trip.ret, trip.value);
        lp_sum += lp.item();
        loss_terms.push_back(std::move(lp));

        Tensor value = predict_value(tape, policy, victim, traj.target, step.state_before,
                                     x_rows, &step.victim_probs_before);
        Tensor lv = value_loss(tape, value, trip.ret);
        lv_sum += lv.item();
        loss_terms.push_back(std::move(lv));
      }
    }
  }

  Tensor total = tape.add_n(loss_terms);
  if (!std::isfinite(total.item()))
    throw TrainingError("non-finite total loss " + std::to_string(total.item()) +
                        " over " + std::to_string(buffer.size()) + " triplets");
  tape.backward(total);
  adam.step();
  adam.zero_grad();

  report.total_loss = total.item();
  report.num_triplets = buffer.size();
  report.mean_policy_loss = report.num_triplets ? lp_sum / report.num_triplets : 0.0;
  report.mean_value_loss = report.num_triplets ? lv_sum / report.num_triplets : 0.0;
  report.mean_feature_loss =
      report.num_feature_samples ? lf_sum / report.num_feature_samples : 0.0;
  buffer.clear();
  return report;
}

using MetricsSink = std::function<void(const nlohmann::json&)>;

namespace detail {

template <typename Fn>
inline void parallel_slots(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::future<void>> futures;
  const std::size_t workers = std::min(threads, count);
  std::atomic<std::size_t> head{0};
  for (std::size_t w = 0; w < workers; ++w)
    futures.push_back(std::async(std::launch::async, [&]() {
      for (;;) {
        std::size_t i = head.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    }));
  for (auto& f : futures) f.get();
}

}  // namespace detail

// Full training loop per the batched A2C procedure: each epoch rolls
// batch_size explore episodes on targets sampled without replacement,
// applies one train_step, and measures greedy attack success on a fixed
// probe subset; stops after `patience` epochs without probe improvement and
// returns the best snapshot.
inline PolicySet train(const PolicySet& initial_policy, const VictimHandle& victim,
                       const std::shared_ptr<const Graph>& g,
                       const std::vector<NodeId>& targets, const AttackBudget& budget,
                       const TrainConfig& config, const MetricsSink& metrics = {}) {
  config.validate();
  if (targets.empty()) throw ConfigError("train needs a nonempty target list");

  Rng master(config.seed);
  std::vector<NodeId> shuffled = targets;
  std::shuffle(shuffled.begin(), shuffled.end(), master.engine());

  // Probe subset for early stopping: held out from the rollout pool when the
  // target list is large enough, otherwise shared (tiny toy problems).
  std::size_t probe_n = config.probe_size;
  if (probe_n == 0) probe_n = std::min<std::size_t>(50, std::max<std::size_t>(1, targets.size() / 5));
  probe_n = std::min(probe_n, shuffled.size());
  std::vector<NodeId> probe(shuffled.begin(), shuffled.begin() + probe_n);
  std::vector<NodeId> pool(shuffled.begin() + probe_n, shuffled.end());
  if (pool.empty()) pool = shuffled;

  const std::size_t threads =
      config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());

  PolicySet policy = initial_policy.clone();
  AdamOptimizer adam(policy.parameters(), {config.lr, 0.9, 0.999, 1e-8, 0.0});

  PolicySet best = policy.clone();
  double best_rate = -1.0;
  std::size_t since_best = 0;

  std::vector<NodeId> order;  // rollout targets, refilled without replacement
  std::size_t order_pos = 0;
  Rng order_rng = master.derive(0x0bdeb001ULL);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::vector<NodeId> batch_targets(config.batch_size);
    for (std::size_t i = 0; i < config.batch_size; ++i) {
      if (order_pos >= order.size()) {
        order = pool;
        std::shuffle(order.begin(), order.end(), order_rng.engine());
        order_pos = 0;
      }
      batch_targets[i] = order[order_pos++];
    }

    std::vector<EpisodeTrajectory> rollouts(config.batch_size);
    detail::parallel_slots(config.batch_size, threads, [&](std::size_t slot) {
      Rng ep_rng = master.derive(((epoch + 1) << 8) ^ slot);
      rollouts[slot] = run_episode(policy, victim, g, batch_targets[slot], budget,
                                   EpisodeMode::explore, ep_rng);
    });

    ReplayBuffer buffer;
    for (auto& traj : rollouts) buffer.add_episode(std::move(traj), config.gamma);
    TrainStepReport report = train_step(policy, buffer, victim, adam, config);

    std::vector<char> probe_hits(probe.size(), 0);
    detail::parallel_slots(probe.size(), threads, [&](std::size_t i) {
      Rng probe_rng = master.derive(0x9e0be000ULL ^ i);
      EpisodeTrajectory traj =
          run_episode(policy, victim, g, probe[i], budget, EpisodeMode::greedy, probe_rng);
      probe_hits[i] = traj.success ? 1 : 0;
    });
    double rate = 0.0;
    for (char h : probe_hits) rate += h;
    rate /= static_cast<double>(probe.size());

    if (metrics)
      metrics({{"epoch", epoch},
               {"mean_Lp", report.mean_policy_loss},
               {"mean_Lv", report.mean_value_loss},
               {"mean_Lf", report.mean_feature_loss},
               {"probe_success_rate", rate},
               {"victim_query_count", victim.query_count()}});

    if (rate > best_rate) {
      best_rate = rate;
      best = policy.clone();
      since_best = 0;
    } else {
      ++since_best;
      if (since_best > config.patience) break;
    }
  }
  return best;
}

}  // namespace ga2c
