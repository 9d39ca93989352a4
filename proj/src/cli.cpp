// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "ckfree/errors.hpp"
#include "ckfree/experiment.hpp"

namespace ckfree::harness {

namespace {

/// Options shared by every experiment-running subcommand, bound to one config.
struct ExperimentCli {
  ExperimentConfig cfg;
  std::string strategy = "no-failures";
  std::string activation = "tanh";
  std::string task = "regression";
  std::string moments = "fresh";
  double target_loss = -1.0;  // <= 0 means unset

  void bind(CLI::App* cmd, bool with_strategy = true) {
    cmd->set_config("-c,--config", "", "key-value config file; flags override");
    cmd->add_option("--input-dim", cfg.model.input_dim);
    cmd->add_option("--hidden-dim", cfg.model.hidden_dim);
    cmd->add_option("--model-dim", cfg.model.model_dim);
    cmd->add_option("--output-dim", cfg.model.output_dim);
    cmd->add_option("--layers", cfg.model.num_layers);
    cmd->add_option("--stages", cfg.model.num_stages);
    cmd->add_option("--activation", activation, "tanh|relu|identity");
    cmd->add_option("--task", task, "regression|classification");
    if (with_strategy) cmd->add_option("--strategy", strategy, "recovery strategy");
    cmd->add_option("--checkpoint-interval", cfg.strategy.checkpoint_interval);
    cmd->add_option("--lr-bump", cfg.strategy.lr_bump);
    cmd->add_flag("--blocking-checkpoint", cfg.strategy.blocking_checkpoint_upload);
    cmd->add_option("--recovered-moments", moments, "fresh|averaged");
    cmd->add_option("--trace", cfg.trace_path, "failure trace file (overrides rates)");
    cmd->add_option("--p-hour", cfg.p_hour, "per-stage hourly failure probability");
    cmd->add_option("--p-iter", cfg.p_iter, "per-stage per-iteration failure probability");
    cmd->add_option("--iter-seconds", cfg.iteration_seconds);
    cmd->add_option("--eligible", cfg.eligible, "auto|intermediate|all");
    cmd->add_option("--iters", cfg.total_iterations);
    cmd->add_option("--batch", cfg.batch_size);
    cmd->add_option("--microbatches", cfg.num_microbatches);
    cmd->add_option("--lr", cfg.lr);
    cmd->add_option("--target-loss", target_loss);
    cmd->add_option("--eval-interval", cfg.eval_interval);
    cmd->add_option("--val-size", cfg.val_size);
    cmd->add_option("--seed", cfg.seed);
    cmd->add_option("--seeds", cfg.seeds)->delimiter(',');
    cmd->add_option("--schedule", cfg.schedule_mode, "auto|standard|swapped-half");
    cmd->add_option("--swap-from", cfg.swap_from_iteration);
    cmd->add_option("--fwd-seconds", cfg.fwd_seconds);
    cmd->add_option("--bwd-seconds", cfg.bwd_seconds);
    cmd->add_option("--profile", cfg.profile_path, "network profile file");
    cmd->add_option("-o,--out", cfg.output_dir, "output directory");
  }

  ExperimentConfig resolve() {
    cfg.strategy.kind = recovery::parse_strategy(strategy);
    cfg.model.activation = parse_activation(activation);
    cfg.model.task = parse_task(task);
    cfg.strategy.recovered_moments = moments == "averaged" ? recovery::MomentRecovery::Averaged
                                     : moments == "fresh"
                                         ? recovery::MomentRecovery::Fresh
                                         : throw ConfigError("recovered-moments must be fresh|averaged");
    if (target_loss > 0.0) cfg.target_val_loss = target_loss;
    cfg.model.finalize();
    cfg.validate();
    return cfg;
  }

  std::vector<std::uint64_t> seed_list() const {
    return cfg.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.seeds;
  }
};

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << content;
}

std::vector<recovery::StrategyConfig> strategy_set(const std::string& names,
                                                   const recovery::StrategyConfig& base) {
  std::vector<std::string> tokens;
  if (names == "all") {
    tokens = {"checkpointing", "redundant", "checkfree", "checkfree-plus"};
  } else {
    std::istringstream in(names);
    std::string tok;
    while (std::getline(in, tok, ','))
      if (!tok.empty()) tokens.push_back(tok);
  }
  if (tokens.empty()) throw ConfigError("empty strategy set");
  std::vector<recovery::StrategyConfig> out;
  for (const auto& name : tokens) {
    recovery::StrategyConfig sc = base;
    sc.kind = recovery::parse_strategy(name);
    out.push_back(sc);
  }
  return out;
}

int run_command(ExperimentCli& ec) {
  ExperimentConfig cfg = ec.resolve();
  if (cfg.output_dir.empty()) cfg.output_dir = "out";
  bool any_unrecoverable = false;
  for (std::uint64_t seed : ec.seed_list()) {
    failures::FailureTrace trace = cfg.resolve_trace(seed);
    const std::string dir = cfg.output_dir + "/" + recovery::to_string(cfg.strategy.kind) + "-s" +
                            std::to_string(seed);
    RunRecord record = run_experiment_to_dir(cfg, trace, seed, dir);
    std::printf("%s seed=%llu: iters=%ld final_val=%.6g hours=%.3f%s -> %s\n",
                recovery::to_string(cfg.strategy.kind), static_cast<unsigned long long>(seed),
                record.slots_run, record.final_val_loss, record.total_hours,
                record.unrecoverable ? " UNRECOVERABLE" : "", dir.c_str());
    any_unrecoverable = any_unrecoverable || record.unrecoverable;
  }
  return any_unrecoverable ? 3 : 0;
}

int compare_command(ExperimentCli& ec, const std::string& strategies) {
  ExperimentConfig cfg = ec.resolve();
  std::vector<recovery::StrategyConfig> set = strategy_set(strategies, cfg.strategy);

  if (cfg.trace_path.empty() && cfg.eligible == "auto") {
    // One shared trace must suit every strategy in the set: restrict to
    // intermediate stages as soon as one strategy cannot recover the edges.
    bool needs_intermediate = false;
    for (const auto& sc : set) {
      ExperimentConfig probe = cfg;
      probe.strategy = sc;
      const auto stages = probe.resolved_eligible();
      if (static_cast<int>(stages.size()) != static_cast<int>(cfg.model.num_stages))
        needs_intermediate = true;
    }
    cfg.eligible = needs_intermediate ? "intermediate" : "all";
  }

  failures::FailureTrace trace = cfg.resolve_trace(cfg.seed);
  std::vector<CompareRow> rows = compare_strategies(cfg, set, trace);
  const std::string table = comparison_table(rows);
  std::fputs(table.c_str(), stdout);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir + "/comparison.csv", comparison_csv(rows));
  }
  return 0;
}

int delta_command(ExperimentCli& ec, long train_iters, std::size_t probe) {
  ExperimentConfig cfg = ec.resolve();
  cfg.strategy.kind = recovery::StrategyKind::NoFailures;
  if (train_iters > 0) cfg.total_iterations = train_iters;
  failures::FailureTrace empty;
  empty.spec.seed = cfg.seed;
  empty.spec.eligible_stages = cfg.resolved_eligible();

  ModelState model;
  run_experiment(cfg, empty, cfg.seed, &model);
  data::TaskContext task = task_for_seed(cfg.model, cfg.seed);
  DeltaReport report = estimate_delta(model, task, probe);
  std::printf("%-6s %12s %12s\n", "layer", "param_ratio", "func_ratio");
  for (const auto& r : report.rows)
    std::printf("%-6zu %12.6f %12.6f\n", r.layer, r.param_ratio, r.func_ratio);
  std::printf("delta (param-space max): %.6f\ndelta (function-space max): %.6f\n", report.delta_param,
              report.delta_func);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir + "/delta.csv", delta_csv(report));
  }
  return 0;
}

int ablate_swap_command(ExperimentCli& ec) {
  ExperimentConfig cfg = ec.resolve();
  SwapAblation ab = ablation_swap(cfg, cfg.seed);
  std::printf("%-14s %12s %12s\n", "milestone", "swap-off", "swap-on");
  for (const auto& m : ab.milestones)
    std::printf("val<=%-9.4f %12ld %12ld\n", m.level, m.iter_off, m.iter_on);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir + "/swap_off_metrics.csv", metrics_csv(ab.off));
    write_text(cfg.output_dir + "/swap_on_metrics.csv", metrics_csv(ab.on));
  }
  return 0;
}

int ablate_checkpoint_command(ExperimentCli& ec, std::vector<long> intervals) {
  ExperimentConfig cfg = ec.resolve();
  if (intervals.empty()) intervals = {10, 50, 100};
  std::vector<recovery::StrategyConfig> set;
  for (long interval : intervals) {
    recovery::StrategyConfig sc = cfg.strategy;
    sc.kind = recovery::StrategyKind::Checkpointing;
    sc.checkpoint_interval = interval;
    set.push_back(sc);
  }
  recovery::StrategyConfig plus = cfg.strategy;
  plus.kind = recovery::StrategyKind::CheckFreePlus;
  set.push_back(plus);

  if (cfg.eligible == "auto") cfg.eligible = "all";
  failures::FailureTrace trace = cfg.resolve_trace(cfg.seed);
  std::vector<CompareRow> rows = compare_strategies(cfg, set, trace);
  for (std::size_t i = 0; i < intervals.size(); ++i)
    rows[i].strategy += "@" + std::to_string(intervals[i]);
  const std::string table = comparison_table(rows);
  std::fputs(table.c_str(), stdout);
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir + "/checkpoint_freq.csv", comparison_csv(rows));
  }
  return 0;
}

int trace_gen_command(double p_hour, double p_iter, long iters, double iter_seconds,
                      std::uint64_t seed, int num_stages, const std::string& eligible,
                      std::vector<int> stages, const std::string& out_path) {
  failures::FailureRateSpec spec;
  spec.seed = seed;
  if (!stages.empty()) {
    spec.eligible_stages = std::move(stages);
  } else if (eligible == "all") {
    spec.eligible_stages = failures::all_stages(num_stages);
  } else {
    spec.eligible_stages = failures::intermediate_stages(num_stages);
  }
  failures::FailureTrace trace;
  if (p_iter >= 0.0) {
    spec.p_hour = p_iter;
    trace = failures::generate_trace(spec, iters, 3600.0);
  } else {
    spec.p_hour = p_hour;
    trace = failures::generate_trace(spec, iters, iter_seconds);
  }
  failures::save_trace(trace, out_path);
  const auto conflicts = failures::consecutive_conflicts(trace);
  std::printf("wrote %zu events over %ld iterations to %s\n", trace.events.size(), iters,
              out_path.c_str());
  for (const auto& c : conflicts)
    std::printf("note: stages %d and %d fail together at iteration %ld (unrecoverable for "
                "neighbor-based strategies)\n",
                c.stage_id, c.stage_id + 1, c.iteration);
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"deterministic simulator for stage-failure recovery in pipeline-parallel training"};
  app.require_subcommand(1);

  ExperimentCli run_cfg, compare_cfg, delta_cfg, swap_cfg, ckpt_cfg;

  CLI::App* run_cmd = app.add_subcommand("run", "run one experiment (per seed) and write records");
  run_cfg.bind(run_cmd);

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run several strategies against one shared failure trace");
  compare_cfg.bind(compare_cmd, /*with_strategy=*/false);
  std::string compare_strats = "all";
  compare_cmd->add_option("--strategies", compare_strats, "comma list or 'all'");

  CLI::App* trace_cmd = app.add_subcommand("trace-gen", "generate a failure trace file");
  double tg_p_hour = 0.0, tg_p_iter = -1.0, tg_iter_seconds = 120.0;
  long tg_iters = 500;
  std::uint64_t tg_seed = 1;
  int tg_num_stages = 4;
  std::string tg_eligible = "intermediate";
  std::vector<int> tg_stages;
  std::string tg_out = "failures.trace";
  trace_cmd->add_option("--p-hour", tg_p_hour);
  trace_cmd->add_option("--p-iter", tg_p_iter);
  trace_cmd->add_option("--iters", tg_iters);
  trace_cmd->add_option("--iter-seconds", tg_iter_seconds);
  trace_cmd->add_option("--seed", tg_seed);
  trace_cmd->add_option("--num-stages", tg_num_stages);
  trace_cmd->add_option("--eligible", tg_eligible, "intermediate|all");
  trace_cmd->add_option("--stages", tg_stages, "explicit eligible stage ids")->delimiter(',');
  trace_cmd->add_option("-o,--out", tg_out);

  CLI::App* delta_cmd =
      app.add_subcommand("delta", "train briefly, then measure per-layer omission ratios");
  delta_cfg.bind(delta_cmd);
  long delta_train_iters = 0;
  std::size_t delta_probe = 256;
  delta_cmd->add_option("--train-iters", delta_train_iters, "training iterations before measuring");
  delta_cmd->add_option("--probe", delta_probe, "probe batch size");

  CLI::App* swap_cmd = app.add_subcommand("ablate-swap", "paired swap-on/off runs at zero failures");
  swap_cfg.bind(swap_cmd, /*with_strategy=*/false);

  CLI::App* ckpt_cmd = app.add_subcommand("ablate-checkpoint-freq",
                                          "checkpoint intervals vs the swapped-schedule strategy");
  ckpt_cfg.bind(ckpt_cmd, /*with_strategy=*/false);
  std::vector<long> ckpt_intervals;
  ckpt_cmd->add_option("--intervals", ckpt_intervals)->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return run_command(run_cfg);
    if (compare_cmd->parsed()) return compare_command(compare_cfg, compare_strats);
    if (trace_cmd->parsed())
      return trace_gen_command(tg_p_hour, tg_p_iter, tg_iters, tg_iter_seconds, tg_seed,
                               tg_num_stages, tg_eligible, tg_stages, tg_out);
    if (delta_cmd->parsed()) return delta_command(delta_cfg, delta_train_iters, delta_probe);
    if (swap_cmd->parsed()) return ablate_swap_command(swap_cfg);
    if (ckpt_cmd->parsed()) return ablate_checkpoint_command(ckpt_cfg, ckpt_intervals);
    std::fputs("no subcommand given\n", stderr);
    return 2;
  } catch (const UnsupportedRecoveryError& e) {
    std::fprintf(stderr, "unrecoverable: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace ckfree::harness
