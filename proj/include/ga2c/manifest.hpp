#pragma once

// One-command reproduction: dataset -> victim -> policy -> evaluation tables.
// All paths are validated before any long-running work starts; every stage
// persists its artifacts immediately so a failed run keeps partial outputs.
// The summary table contains no timestamps: identical config + seeds must
// reproduce it byte for byte.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ga2c/harness.hpp"

namespace ga2c {

struct ExperimentConfig {
  std::string dataset;
  std::string data_dir = "data";
  std::string out_dir;
  std::vector<std::uint64_t> seeds{0};

  BudgetSpec beta_n{BudgetSpec::Kind::absolute, 3.0};
  BudgetSpec beta_e{BudgetSpec::Kind::average, 1.0};
  BudgetSpec beta_f{BudgetSpec::Kind::average, 1.0};

  enum class TargetMode { test, sample, file };
  TargetMode target_mode = TargetMode::test;
  std::size_t sample_n = 0;
  std::string target_file;

  std::string victim_checkpoint;  // reuse when set, train otherwise
  VictimTrainConfig victim;

  std::string policy_checkpoint;  // reuse when set, train otherwise
  PolicyHyper hyper;
  TrainConfig train;

  std::vector<int> eval_beta_n;  // evaluation columns; {budget beta_n} when empty
  std::vector<std::string> baselines;
  std::optional<std::string> sweep_axis;
  std::vector<double> sweep_multipliers;
  std::optional<NodeId> case_study_target;
  std::size_t threads = 0;

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.dataset = j.at("dataset").get<std::string>();
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw ConfigError("config needs at least one seed");
    if (j.contains("budgets")) {
      const auto& b = j["budgets"];
      auto spec = [&](const char* key, BudgetSpec fallback) {
        if (!b.contains(key)) return fallback;
        if (b[key].is_number()) return BudgetSpec{BudgetSpec::Kind::absolute, b[key].get<double>()};
        return BudgetSpec::parse(b[key].get<std::string>());
      };
      c.beta_n = spec("beta_n", c.beta_n);
      c.beta_e = spec("beta_e", c.beta_e);
      c.beta_f = spec("beta_f", c.beta_f);
    }
    if (j.contains("targets")) {
      const auto& t = j["targets"];
      if (t.is_string() && t.get<std::string>() == "test") {
        c.target_mode = TargetMode::test;
      } else if (t.is_object() && t.contains("sample")) {
        c.target_mode = TargetMode::sample;
        c.sample_n = t["sample"].get<std::size_t>();
      } else if (t.is_object() && t.contains("file")) {
        c.target_mode = TargetMode::file;
        c.target_file = t["file"].get<std::string>();
      } else {
        throw ConfigError("targets must be \"test\", {\"sample\": n}, or {\"file\": path}");
      }
    }
    if (j.contains("victim")) {
      const auto& v = j["victim"];
      c.victim_checkpoint = v.value("checkpoint", std::string{});
      c.victim.hidden = v.value("hidden", c.victim.hidden);
      c.victim.dropout = v.value("dropout", c.victim.dropout);
      c.victim.lr = v.value("lr", c.victim.lr);
      c.victim.weight_decay = v.value("weight_decay", c.victim.weight_decay);
      c.victim.epochs = v.value("epochs", c.victim.epochs);
    }
    if (j.contains("attack_train")) {
      const auto& a = j["attack_train"];
      c.policy_checkpoint = a.value("checkpoint", std::string{});
      c.train.gamma = a.value("gamma", c.train.gamma);
      c.train.batch_size = a.value("batch_size", c.train.batch_size);
      c.train.lr = a.value("lr", c.train.lr);
      c.train.patience = a.value("patience", c.train.patience);
      c.train.max_epochs = a.value("max_epochs", c.train.max_epochs);
      c.train.probe_size = a.value("probe_size", c.train.probe_size);
      c.hyper.d = a.value("hidden", c.hyper.d);
      c.hyper.tau = a.value("tau", c.hyper.tau);
      c.hyper.alpha_n = a.value("alpha_n", c.hyper.alpha_n);
      c.hyper.bonus = a.value("bonus", c.hyper.bonus);
    }
    if (j.contains("evaluate") && j["evaluate"].contains("beta_n_values"))
      c.eval_beta_n = j["evaluate"]["beta_n_values"].get<std::vector<int>>();
    if (j.contains("baselines")) c.baselines = j["baselines"].get<std::vector<std::string>>();
    if (j.contains("sweep")) {
      c.sweep_axis = j["sweep"].at("axis").get<std::string>();
      c.sweep_multipliers = j["sweep"].at("multipliers").get<std::vector<double>>();
    }
    if (j.contains("case_study_target"))
      c.case_study_target = j["case_study_target"].get<NodeId>();
    c.threads = j.value("threads", c.threads);
    return c;
  }
};

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

inline std::vector<NodeId> resolve_targets(const ExperimentConfig& cfg, const Graph& g,
                                           std::uint64_t seed) {
  switch (cfg.target_mode) {
    case ExperimentConfig::TargetMode::test: {
      if (g.test_idx.empty()) throw ConfigError("dataset has no test split");
      return g.test_idx;
    }
    case ExperimentConfig::TargetMode::sample: {
      if (g.test_idx.empty()) throw ConfigError("dataset has no test split");
      if (cfg.sample_n == 0) throw ConfigError("target sample size must be positive");
      std::vector<NodeId> pool = g.test_idx;
      Rng rng = Rng(seed).derive(0x7a26e750ULL);
      std::shuffle(pool.begin(), pool.end(), rng.engine());
      pool.resize(std::min(cfg.sample_n, pool.size()));
      std::sort(pool.begin(), pool.end());
      return pool;
    }
    case ExperimentConfig::TargetMode::file: {
      std::vector<NodeId> out;
      const std::string text = read_file(cfg.target_file);
      if (!text.empty() && text.front() == '[') {
        for (const auto& v : nlohmann::json::parse(text)) out.push_back(v.get<NodeId>());
      } else {
        std::istringstream ss(text);
        std::string tok;
        while (ss >> tok) out.push_back(static_cast<NodeId>(std::stoul(tok)));
      }
      if (out.empty()) throw ConfigError("target file " + cfg.target_file + " lists no nodes");
      for (NodeId v : out)
        if (v >= g.num_nodes()) throw ConfigError("target file references node out of range");
      return out;
    }
  }
  throw ConfigError("unreachable target mode");
}

struct ManifestResult {
  std::filesystem::path out_dir;
  nlohmann::json summary;
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error("stage '" + name + "' failed: " + e.what());
  }
}

}  // namespace detail

inline ManifestResult run_manifest(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;

  // Validate every path up front.
  const fs::path data_dir(cfg.data_dir);
  if (!fs::exists(data_dir / (cfg.dataset + ".json")) &&
      !fs::exists(data_dir / (cfg.dataset + ".content")))
    throw ConfigError("dataset '" + cfg.dataset + "' not found under " + cfg.data_dir);
  if (!cfg.victim_checkpoint.empty() && !fs::exists(cfg.victim_checkpoint))
    throw ConfigError("victim checkpoint not found: " + cfg.victim_checkpoint);
  if (!cfg.policy_checkpoint.empty() && !fs::exists(cfg.policy_checkpoint))
    throw ConfigError("policy checkpoint not found: " + cfg.policy_checkpoint);
  if (cfg.target_mode == ExperimentConfig::TargetMode::file && !fs::exists(cfg.target_file))
    throw ConfigError("target file not found: " + cfg.target_file);
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);

  auto g = std::make_shared<const Graph>(detail::run_stage(
      "load-dataset", [&] { return load_dataset(cfg.data_dir, cfg.dataset); }));
  GraphStatistics stats = graph_statistics(*g);
  const AttackBudget base_budget = resolve_budgets(cfg.beta_n, cfg.beta_e, cfg.beta_f, stats);
  std::vector<int> beta_n_values =
      cfg.eval_beta_n.empty() ? std::vector<int>{base_budget.beta_n} : cfg.eval_beta_n;

  // method -> beta_n -> per-seed attacked accuracies
  std::map<std::string, std::map<int, std::vector<double>>> table;
  std::vector<double> clean_accs;

  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = "seed" + std::to_string(seed);

    std::shared_ptr<VictimHandle> victim = detail::run_stage("train-victim", [&] {
      if (!cfg.victim_checkpoint.empty()) return VictimInspector::load(cfg.victim_checkpoint, g);
      VictimTrainConfig vc = cfg.victim;
      vc.seed = seed;
      auto h = train_victim(g, vc);
      VictimInspector::save(*h, (out / ("victim_" + tag + ".ckpt.json")).string(), cfg.dataset);
      return h;
    });
    clean_accs.push_back(VictimInspector::clean_test_accuracy(*victim));

    PolicySet policy = detail::run_stage("attack-train", [&] {
      if (!cfg.policy_checkpoint.empty()) return load_policy(cfg.policy_checkpoint);
      if (g->val_idx.empty()) throw ConfigError("dataset has no validation split to train on");
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      tc.threads = cfg.threads;
      PolicySet init = PolicySet::init(g->num_features, g->num_classes, cfg.hyper, seed);
      std::ostringstream metrics;
      PolicySet trained = train(init, *victim, g, g->val_idx, base_budget, tc,
                                [&](const nlohmann::json& j) { metrics << j.dump() << '\n'; });
      write_file_atomic((out / ("metrics_" + tag + ".jsonl")).string(), metrics.str());
      save_policy(trained, (out / ("policy_" + tag + ".ckpt.json")).string(),
                  {{"dataset", cfg.dataset}, {"seed", seed}});
      return trained;
    });

    const std::vector<NodeId> targets = resolve_targets(cfg, *g, seed);

    detail::run_stage("evaluate", [&] {
      for (int bn : beta_n_values) {
        AttackBudget b = base_budget;
        b.beta_n = bn;
        AttackReport rep = evaluate_attack(policy, *victim, g, targets, b, seed, cfg.threads);
        write_file_atomic(
            (out / ("report_ga2c_bn" + std::to_string(bn) + "_" + tag + ".json")).string(),
            rep.to_json().dump(2) + "\n");
        table["ga2c"][bn].push_back(rep.attacked_accuracy);
      }
      return 0;
    });

    detail::run_stage("baseline", [&] {
      for (const std::string& name : cfg.baselines) {
        BaselineVariant variant = parse_baseline(name);
        for (int bn : beta_n_values) {
          AttackBudget b = base_budget;
          b.beta_n = bn;
          AttackReport rep =
              baseline_random(*victim, g, targets, b, variant, &policy, seed, cfg.threads);
          write_file_atomic((out / ("report_" + name + "_bn" + std::to_string(bn) + "_" + tag +
                                    ".json"))
                                .string(),
                            rep.to_json().dump(2) + "\n");
          table[name][bn].push_back(rep.attacked_accuracy);
        }
      }
      return 0;
    });

    if (cfg.sweep_axis) {
      detail::run_stage("sweep", [&] {
        BudgetAxis axis = parse_budget_axis(*cfg.sweep_axis);
        auto points = budget_sweep(policy, *victim, g, targets, axis, cfg.sweep_multipliers,
                                   seed, cfg.threads, base_budget);
        write_file_atomic((out / ("sweep_" + *cfg.sweep_axis + "_" + tag + ".csv")).string(),
                          sweep_csv(axis, points));
        return 0;
      });
    }

    if (cfg.case_study_target) {
      detail::run_stage("dump-embeddings", [&] {
        CaseStudyResult cs =
            case_study_dump(policy, *victim, g, *cfg.case_study_target, base_budget, seed);
        write_file_atomic((out / ("case_study_" + tag + ".csv")).string(), cs.csv);
        return 0;
      });
    }
  }

  // Summary table: rows = methods, columns = beta_n, cells = mean attacked
  // accuracy (%) over seeds. Mirrors the per-attacker layout of the paper's
  // main table. No timestamps or timings in here.
  std::ostringstream csv;
  csv << "method";
  for (int bn : beta_n_values) csv << ",beta_n=" << bn;
  csv << '\n';
  std::vector<std::string> methods{"ga2c"};
  for (const auto& b : cfg.baselines) methods.push_back(b);
  for (const auto& m : methods) {
    csv << m;
    for (int bn : beta_n_values) {
      const auto& accs = table[m][bn];
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean = accs.empty() ? 0.0 : mean / static_cast<double>(accs.size());
      csv << ',' << fmt_fixed(100.0 * mean, 1);
    }
    csv << '\n';
  }
  double clean_mean = 0.0;
  for (double a : clean_accs) clean_mean += a;
  clean_mean /= static_cast<double>(clean_accs.size());

  nlohmann::json summary;
  summary["software"] = kSoftwareVersion;
  summary["dataset"] = cfg.dataset;
  summary["stats"] = {{"num_nodes", stats.num_nodes}, {"num_edges", stats.num_edges},
                      {"num_features", stats.num_features}, {"num_classes", stats.num_classes},
                      {"avg_degree", stats.avg_degree}, {"avg_feature_sum", stats.avg_feature_sum}};
  summary["seeds"] = cfg.seeds;
  summary["budget"] = {{"beta_n", base_budget.beta_n}, {"beta_e", base_budget.beta_e},
                       {"beta_f", base_budget.beta_f}};
  summary["clean_test_accuracy_mean"] = clean_mean;
  for (const auto& [method, cols] : table)
    for (const auto& [bn, accs] : cols) {
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      summary["attacked_accuracy"][method]["beta_n=" + std::to_string(bn)] = mean;
    }

  write_file_atomic((out / "summary.csv").string(), csv.str());
  write_file_atomic((out / "summary.json").string(), summary.dump(2) + "\n");

  ManifestResult result;
  result.out_dir = out;
  result.summary = std::move(summary);
  return result;
}

}  // namespace ga2c
