// GA2C command line: train the GCN victim, train the attacker, and run
// evaluations, baselines, sweeps, and embedding dumps. Exit codes: 0 on
// success, 2 for configuration errors, 3 for runtime failures.

#include <cstdint>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ga2c/attacker.hpp"
#include "ga2c/dataset.hpp"
#include "ga2c/harness.hpp"
#include "ga2c/manifest.hpp"
#include "ga2c/training.hpp"
#include "ga2c/victim.hpp"

namespace {

using namespace ga2c;

std::vector<NodeId> parse_targets_flag(const std::string& spec, const Graph& g,
                                       std::uint64_t seed) {
  ExperimentConfig cfg;
  if (spec == "test") {
    cfg.target_mode = ExperimentConfig::TargetMode::test;
  } else if (spec.rfind("file:", 0) == 0) {
    cfg.target_mode = ExperimentConfig::TargetMode::file;
    cfg.target_file = spec.substr(5);
  } else if (spec.rfind("sample:", 0) == 0) {
    cfg.target_mode = ExperimentConfig::TargetMode::sample;
    cfg.sample_n = std::stoul(spec.substr(7));
  } else {
    throw ConfigError("targets must be test, file:<path>, or sample:<n>");
  }
  return resolve_targets(cfg, g, seed);
}

std::vector<double> parse_multipliers(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  if (out.empty()) throw ConfigError("no sweep multipliers given");
  return out;
}

struct CommonArgs {
  std::string dataset;
  std::string data_dir = "data";
  std::uint64_t seed = 0;
  std::string out;
  std::string targets = "test";
  std::string beta_n = "3", beta_e = "avg", beta_f = "avg";
  std::size_t threads = 0;
};

void add_budget_flags(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--beta-n", a.beta_n, "injected nodes per target (<int>|<float>x)");
  cmd->add_option("--beta-e", a.beta_e, "degree per injected node (<int>|avg|<float>x)");
  cmd->add_option("--beta-f", a.beta_f, "features per injected node (<int>|avg|<float>x)");
}

int dispatch(int argc, char** argv) {
  CLI::App app{"GA2C: black-box node injection attacks on graph convolutional networks"};
  app.require_subcommand(1);

  // train-victim
  CommonArgs tv;
  auto* cmd_tv = app.add_subcommand("train-victim", "train and seal the GCN victim");
  cmd_tv->add_option("--dataset", tv.dataset)->required();
  cmd_tv->add_option("--data-dir", tv.data_dir);
  cmd_tv->add_option("--seed", tv.seed);
  cmd_tv->add_option("--out", tv.out)->required();
  std::size_t tv_hidden = 16, tv_epochs = 200;
  cmd_tv->add_option("--hidden", tv_hidden);
  cmd_tv->add_option("--epochs", tv_epochs);

  // attack-train
  CommonArgs at;
  std::string at_victim;
  std::string at_metrics;
  TrainConfig at_train;
  PolicyHyper at_hyper;
  auto* cmd_at = app.add_subcommand("attack-train", "train the GA2C attacker networks");
  cmd_at->add_option("--victim", at_victim)->required();
  cmd_at->add_option("--dataset", at.dataset)->required();
  cmd_at->add_option("--data-dir", at.data_dir);
  add_budget_flags(cmd_at, at);
  cmd_at->add_option("--seed", at.seed);
  cmd_at->add_option("--out", at.out)->required();
  cmd_at->add_option("--metrics", at_metrics, "metrics stream (JSON lines)");
  cmd_at->add_option("--max-epochs", at_train.max_epochs);
  cmd_at->add_option("--patience", at_train.patience);
  cmd_at->add_option("--batch-size", at_train.batch_size);
  cmd_at->add_option("--probe-size", at_train.probe_size);
  cmd_at->add_option("--threads", at.threads);
  cmd_at->add_option("--hidden", at_hyper.d);

  // evaluate
  CommonArgs ev;
  std::string ev_victim, ev_policy, ev_traces;
  auto* cmd_ev = app.add_subcommand("evaluate", "greedy GA2C attack over a target set");
  cmd_ev->add_option("--victim", ev_victim)->required();
  cmd_ev->add_option("--policy", ev_policy)->required();
  cmd_ev->add_option("--dataset", ev.dataset)->required();
  cmd_ev->add_option("--data-dir", ev.data_dir);
  cmd_ev->add_option("--targets", ev.targets, "test | file:<path> | sample:<n>");
  add_budget_flags(cmd_ev, ev);
  cmd_ev->add_option("--seed", ev.seed);
  cmd_ev->add_option("--out", ev.out, "report JSON path")->required();
  cmd_ev->add_option("--traces", ev_traces, "episode trace JSONL path");
  cmd_ev->add_option("--threads", ev.threads);

  // baseline
  CommonArgs bl;
  std::string bl_victim, bl_policy, bl_variant = "random";
  auto* cmd_bl = app.add_subcommand("baseline", "random attack baselines");
  cmd_bl->add_option("--victim", bl_victim)->required();
  cmd_bl->add_option("--policy", bl_policy, "needed by the hybrid variants");
  cmd_bl->add_option("--variant", bl_variant, "random | node_plus_random | random_plus_edge");
  cmd_bl->add_option("--dataset", bl.dataset)->required();
  cmd_bl->add_option("--data-dir", bl.data_dir);
  cmd_bl->add_option("--targets", bl.targets);
  add_budget_flags(cmd_bl, bl);
  cmd_bl->add_option("--seed", bl.seed);
  cmd_bl->add_option("--out", bl.out)->required();
  cmd_bl->add_option("--threads", bl.threads);

  // sweep
  CommonArgs sw;
  std::string sw_victim, sw_policy, sw_axis = "beta_e", sw_mults = "1.0";
  auto* cmd_sw = app.add_subcommand("sweep", "attack accuracy along one budget axis");
  cmd_sw->add_option("--victim", sw_victim)->required();
  cmd_sw->add_option("--policy", sw_policy)->required();
  cmd_sw->add_option("--dataset", sw.dataset)->required();
  cmd_sw->add_option("--data-dir", sw.data_dir);
  cmd_sw->add_option("--targets", sw.targets);
  cmd_sw->add_option("--axis", sw_axis, "beta_n | beta_e | beta_f");
  cmd_sw->add_option("--multipliers", sw_mults, "comma-separated, e.g. 0.5,1.0,1.5");
  add_budget_flags(cmd_sw, sw);
  cmd_sw->add_option("--seed", sw.seed);
  cmd_sw->add_option("--out", sw.out, "CSV path")->required();
  cmd_sw->add_option("--threads", sw.threads);

  // dump-embeddings
  CommonArgs de;
  std::string de_victim, de_policy;
  NodeId de_target = 0;
  auto* cmd_de = app.add_subcommand("dump-embeddings", "case-study embedding dump for one target");
  cmd_de->add_option("--victim", de_victim)->required();
  cmd_de->add_option("--policy", de_policy)->required();
  cmd_de->add_option("--dataset", de.dataset)->required();
  cmd_de->add_option("--data-dir", de.data_dir);
  cmd_de->add_option("--target", de_target)->required();
  add_budget_flags(cmd_de, de);
  cmd_de->add_option("--seed", de.seed);
  cmd_de->add_option("--out", de.out)->required();

  // run (manifest)
  std::string run_config;
  auto* cmd_run = app.add_subcommand("run", "run a full experiment manifest");
  cmd_run->add_option("--config", run_config, "experiment config JSON")->required();

  CLI11_PARSE(app, argc, argv);

  if (app.got_subcommand(cmd_tv)) {
    auto g = std::make_shared<const Graph>(load_dataset(tv.data_dir, tv.dataset));
    VictimTrainConfig vc;
    vc.hidden = tv_hidden;
    vc.epochs = tv_epochs;
    vc.seed = tv.seed;
    auto victim = train_victim(g, vc);
    VictimInspector::save(*victim, tv.out, tv.dataset);
    std::cout << "victim sealed: clean test accuracy "
              << fmt_fixed(100.0 * VictimInspector::clean_test_accuracy(*victim), 2) << "% -> "
              << tv.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_at)) {
    auto g = std::make_shared<const Graph>(load_dataset(at.data_dir, at.dataset));
    auto victim = VictimInspector::load(at_victim, g);
    GraphStatistics stats = graph_statistics(*g);
    AttackBudget budget = resolve_budgets(BudgetSpec::parse(at.beta_n),
                                          BudgetSpec::parse(at.beta_e),
                                          BudgetSpec::parse(at.beta_f), stats);
    if (g->val_idx.empty()) throw ConfigError("dataset has no validation split to train on");
    at_train.seed = at.seed;
    at_train.threads = at.threads;
    PolicySet init = PolicySet::init(g->num_features, g->num_classes, at_hyper, at.seed);
    std::ostringstream metrics;
    PolicySet trained =
        train(init, *victim, g, g->val_idx, budget, at_train, [&](const nlohmann::json& j) {
          metrics << j.dump() << '\n';
          std::cerr << j.dump() << "\n";
        });
    if (!at_metrics.empty()) write_file_atomic(at_metrics, metrics.str());
    save_policy(trained, at.out, {{"dataset", at.dataset}, {"seed", at.seed}});
    std::cout << "policy saved -> " << at.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_ev)) {
    auto g = std::make_shared<const Graph>(load_dataset(ev.data_dir, ev.dataset));
    auto victim = VictimInspector::load(ev_victim, g);
    PolicySet policy = load_policy(ev_policy);
    GraphStatistics stats = graph_statistics(*g);
    AttackBudget budget = resolve_budgets(BudgetSpec::parse(ev.beta_n),
                                          BudgetSpec::parse(ev.beta_e),
                                          BudgetSpec::parse(ev.beta_f), stats);
    std::vector<NodeId> targets = parse_targets_flag(ev.targets, *g, ev.seed);
    AttackReport report = evaluate_attack(policy, *victim, g, targets, budget, ev.seed, ev.threads);
    write_file_atomic(ev.out, report.to_json().dump(2) + "\n");
    if (!ev_traces.empty()) {
      std::ostringstream traces;
      for (NodeId v : targets) {
        Rng rng = Rng(ev.seed).derive(v);
        traces << episode_trace_lines(
            run_episode(policy, *victim, g, v, budget, EpisodeMode::greedy, rng));
      }
      write_file_atomic(ev_traces, traces.str());
    }
    std::cout << "attacked accuracy " << fmt_fixed(100.0 * report.attacked_accuracy, 2)
              << "% over " << targets.size() << " targets -> " << ev.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_bl)) {
    auto g = std::make_shared<const Graph>(load_dataset(bl.data_dir, bl.dataset));
    auto victim = VictimInspector::load(bl_victim, g);
    BaselineVariant variant = parse_baseline(bl_variant);
    std::optional<PolicySet> policy;
    if (!bl_policy.empty()) policy = load_policy(bl_policy);
    GraphStatistics stats = graph_statistics(*g);
    AttackBudget budget = resolve_budgets(BudgetSpec::parse(bl.beta_n),
                                          BudgetSpec::parse(bl.beta_e),
                                          BudgetSpec::parse(bl.beta_f), stats);
    std::vector<NodeId> targets = parse_targets_flag(bl.targets, *g, bl.seed);
    AttackReport report = baseline_random(*victim, g, targets, budget, variant,
                                          policy ? &*policy : nullptr, bl.seed, bl.threads);
    write_file_atomic(bl.out, report.to_json().dump(2) + "\n");
    std::cout << report.method << " attacked accuracy "
              << fmt_fixed(100.0 * report.attacked_accuracy, 2) << "% -> " << bl.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_sw)) {
    auto g = std::make_shared<const Graph>(load_dataset(sw.data_dir, sw.dataset));
    auto victim = VictimInspector::load(sw_victim, g);
    PolicySet policy = load_policy(sw_policy);
    GraphStatistics stats = graph_statistics(*g);
    AttackBudget base = resolve_budgets(BudgetSpec::parse(sw.beta_n),
                                        BudgetSpec::parse(sw.beta_e),
                                        BudgetSpec::parse(sw.beta_f), stats);
    std::vector<NodeId> targets = parse_targets_flag(sw.targets, *g, sw.seed);
    BudgetAxis axis = parse_budget_axis(sw_axis);
    auto points = budget_sweep(policy, *victim, g, targets, axis, parse_multipliers(sw_mults),
                               sw.seed, sw.threads, base);
    write_file_atomic(sw.out, sweep_csv(axis, points));
    std::cout << "sweep over " << sw_axis << " -> " << sw.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_de)) {
    auto g = std::make_shared<const Graph>(load_dataset(de.data_dir, de.dataset));
    auto victim = VictimInspector::load(de_victim, g);
    PolicySet policy = load_policy(de_policy);
    GraphStatistics stats = graph_statistics(*g);
    AttackBudget budget = resolve_budgets(BudgetSpec::parse(de.beta_n),
                                          BudgetSpec::parse(de.beta_e),
                                          BudgetSpec::parse(de.beta_f), stats);
    CaseStudyResult cs = case_study_dump(policy, *victim, g, de_target, budget, de.seed);
    write_file_atomic(de.out, cs.csv);
    std::cout << "case study (" << (cs.success ? "flip" : "no flip") << ") -> " << de.out << "\n";
    return 0;
  }

  if (app.got_subcommand(cmd_run)) {
    ExperimentConfig cfg = load_experiment_config(run_config);
    ManifestResult result = run_manifest(cfg);
    std::cout << "manifest complete -> " << result.out_dir.string() << "\n";
    std::cout << read_file((result.out_dir / "summary.csv").string());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ga2c::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ga2c::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
