// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ckfree/errors.hpp"
#include "ckfree/experiment.hpp"
#include "ckfree/kernels.hpp"

namespace ckfree::harness {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << content;
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  strategy.validate();
  if (model.num_stages < 2) throw ConfigError("experiments need a pipeline of at least 2 stages");
  if (total_iterations <= 0) throw ConfigError("total_iterations must be positive");
  if (batch_size == 0 || num_microbatches <= 0 ||
      batch_size % static_cast<std::size_t>(num_microbatches) != 0)
    throw ConfigError("batch size must be a positive multiple of the microbatch count");
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  if (eval_interval <= 0) throw ConfigError("eval_interval must be positive");
  if (val_size == 0) throw ConfigError("validation set must be non-empty");
  if (target_val_loss && *target_val_loss <= 0.0) throw ConfigError("target loss must be positive");
  if (p_iter >= 0.0 && p_iter >= 1.0) throw ConfigError("p_iter must lie in [0, 1)");
  if (p_hour < 0.0 || p_hour >= 1.0) throw ConfigError("p_hour must lie in [0, 1)");
  if (iteration_seconds <= 0.0) throw ConfigError("iteration_seconds must be positive");
  if (schedule_mode != "auto" && schedule_mode != "standard" && schedule_mode != "swapped-half")
    throw ConfigError("schedule_mode must be auto|standard|swapped-half");
  if (eligible != "auto" && eligible != "intermediate" && eligible != "all")
    throw ConfigError("eligible must be auto|intermediate|all");
  if (resolved_schedule() == pipeline::ScheduleMode::SwappedHalf) {
    if (model.num_stages < 4) throw ConfigError("the swapped schedule requires at least 4 stages");
    if (num_microbatches % 2 != 0)
      throw ConfigError("the swapped schedule requires an even microbatch count");
  }
  if (strategy.neighbor_based() && !model.uniform_partition())
    throw ConfigError("neighbor-based recovery requires a uniform stage partition");
  if (fwd_seconds <= 0.0 || bwd_seconds < fwd_seconds)
    throw ConfigError("compute seconds must satisfy 0 < fwd <= bwd");
}

pipeline::ScheduleMode ExperimentConfig::resolved_schedule() const {
  if (schedule_mode == "standard") return pipeline::ScheduleMode::Standard;
  if (schedule_mode == "swapped-half") return pipeline::ScheduleMode::SwappedHalf;
  return strategy.uses_swapped_schedule() ? pipeline::ScheduleMode::SwappedHalf
                                          : pipeline::ScheduleMode::Standard;
}

std::vector<int> ExperimentConfig::resolved_eligible() const {
  const int s = static_cast<int>(model.num_stages);
  if (eligible == "intermediate") return failures::intermediate_stages(s);
  if (eligible == "all") return failures::all_stages(s);
  // auto: strategies that cannot recover edge stages get intermediate-only traces
  switch (strategy.kind) {
    case recovery::StrategyKind::CheckFree:
    case recovery::StrategyKind::ReinitRandom:
    case recovery::StrategyKind::ReinitCopy:
    case recovery::StrategyKind::ReinitUniformAvg:
      return failures::intermediate_stages(s);
    default:
      return failures::all_stages(s);
  }
}

cost::NetworkProfile ExperimentConfig::resolved_profile() const {
  cost::NetworkProfile profile = profile_path.empty()
                                     ? cost::NetworkProfile::synthetic_default(
                                           static_cast<int>(model.num_stages))
                                     : cost::load_profile(profile_path);
  if (profile.num_stages() != static_cast<int>(model.num_stages))
    throw ConfigError("network profile assigns " + std::to_string(profile.num_stages()) +
                      " stages but the model has " + std::to_string(model.num_stages));
  return profile;
}

cost::CostParams ExperimentConfig::resolved_cost_params() const {
  return cost::CostParams::from_model(model, batch_size, num_microbatches, fwd_seconds, bwd_seconds);
}

failures::FailureTrace ExperimentConfig::resolve_trace(std::uint64_t seed_override) const {
  if (!trace_path.empty()) return failures::load_trace(trace_path);
  failures::FailureRateSpec spec;
  spec.eligible_stages = resolved_eligible();
  spec.seed = seed_override;
  if (p_iter >= 0.0) {
    // Direct per-iteration probability: expressed as an hourly rate over
    // one-hour iterations, which converts back to exactly p_iter.
    spec.p_hour = p_iter;
    return failures::generate_trace(spec, total_iterations, 3600.0);
  }
  spec.p_hour = p_hour;
  return failures::generate_trace(spec, total_iterations, iteration_seconds);
}

std::string ExperimentConfig::to_config_string() const {
  std::ostringstream out;
  out << "# resolved experiment configuration\n";
  out << "input-dim = " << model.input_dim << '\n';
  out << "hidden-dim = " << model.hidden_dim << '\n';
  out << "model-dim = " << model.model_dim << '\n';
  out << "output-dim = " << model.output_dim << '\n';
  out << "layers = " << model.num_layers << '\n';
  out << "stages = " << model.num_stages << '\n';
  out << "activation = " << to_string(model.activation) << '\n';
  out << "task = " << to_string(model.task) << '\n';
  out << "strategy = " << recovery::to_string(strategy.kind) << '\n';
  out << "checkpoint-interval = " << strategy.checkpoint_interval << '\n';
  out << "lr-bump = " << fmt(strategy.lr_bump) << '\n';
  out << "blocking-checkpoint = " << (strategy.blocking_checkpoint_upload ? "true" : "false") << '\n';
  out << "recovered-moments = "
      << (strategy.recovered_moments == recovery::MomentRecovery::Fresh ? "fresh" : "averaged") << '\n';
  if (!trace_path.empty()) out << "trace = " << trace_path << '\n';
  out << "p-hour = " << fmt(p_hour) << '\n';
  if (p_iter >= 0.0) out << "p-iter = " << fmt(p_iter) << '\n';
  out << "iter-seconds = " << fmt(iteration_seconds) << '\n';
  out << "eligible = " << eligible << '\n';
  out << "iters = " << total_iterations << '\n';
  out << "batch = " << batch_size << '\n';
  out << "microbatches = " << num_microbatches << '\n';
  out << "lr = " << fmt(lr) << '\n';
  if (target_val_loss) out << "target-loss = " << fmt(*target_val_loss) << '\n';
  out << "eval-interval = " << eval_interval << '\n';
  out << "val-size = " << val_size << '\n';
  out << "seed = " << seed << '\n';
  out << "schedule = " << schedule_mode << '\n';
  out << "swap-from = " << swap_from_iteration << '\n';
  out << "fwd-seconds = " << fmt(fwd_seconds) << '\n';
  out << "bwd-seconds = " << fmt(bwd_seconds) << '\n';
  if (!profile_path.empty()) out << "profile = " << profile_path << '\n';
  if (!output_dir.empty()) out << "out = " << output_dir << '\n';
  return out.str();
}

std::string metrics_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "# format_version=1\n";
  out << "iter,train_loss,val_loss,wall_hours\n";
  for (const auto& e : record.evals)
    out << e.iter << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ',' << fmt(e.wall_hours)
        << '\n';
  return out.str();
}

std::string events_csv(const RunRecord& record) {
  std::ostringstream out;
  out << "# format_version=1\n";
  out << "iter,stage,action,reduction_error,recovery_s\n";
  for (const auto& e : record.events)
    out << e.iter << ',' << e.stage << ',' << e.action << ',' << fmt(e.reduction_error) << ','
        << fmt(e.recovery_s) << '\n';
  return out.str();
}

std::string summary_json(const ExperimentConfig& config, const RunRecord& record,
                         std::uint64_t seed) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["strategy"] = recovery::to_string(config.strategy.kind);
  j["seed"] = seed;
  j["iterations_run"] = record.slots_run;
  j["model_iterations"] = record.model_iterations;
  if (record.slots_to_target >= 0) {
    j["iterations_to_target"] = record.slots_to_target;
    j["model_iterations_to_target"] = record.model_iters_to_target;
  } else {
    j["iterations_to_target"] = nullptr;
    j["model_iterations_to_target"] = nullptr;
  }
  j["total_hours"] = record.total_hours;
  j["iteration_time_s"] = record.iteration_time_s;
  j["unrecoverable"] = record.unrecoverable;
  if (record.unrecoverable) j["unrecoverable_reason"] = record.unrecoverable_reason;
  j["final_train_loss"] = record.final_train_loss;
  j["final_val_loss"] = record.final_val_loss;
  if (config.target_val_loss) j["target_val_loss"] = *config.target_val_loss;
  j["failure_events"] = record.events.size();
  return j.dump(2) + "\n";
}

RunRecord run_experiment_to_dir(const ExperimentConfig& config, const failures::FailureTrace& trace,
                                std::uint64_t seed, const std::string& dir) {
  std::filesystem::create_directories(dir);
  RunRecord record = run_experiment(config, trace, seed);
  write_file(dir + "/metrics.csv", metrics_csv(record));
  write_file(dir + "/events.csv", events_csv(record));
  write_file(dir + "/summary.json", summary_json(config, record, seed));
  ExperimentConfig resolved = config;
  resolved.seed = seed;
  write_file(dir + "/config.resolved", resolved.to_config_string());
  return record;
}

namespace {

CompareRow make_row(const ExperimentConfig& base, const recovery::StrategyConfig& strategy,
                    const failures::FailureTrace& trace, const RunRecord& record) {
  const cost::NetworkProfile profile = base.resolved_profile();
  const cost::CostParams params = base.resolved_cost_params();
  recovery::StrategyConfig sc = strategy;
  const cost::IterationCost per_iter = cost::iteration_cost(sc, profile, params);

  CompareRow row;
  row.strategy = recovery::to_string(strategy.kind);
  row.iteration_time_s = per_iter.total();
  row.slots_to_target = record.slots_to_target;
  row.model_iters_to_target = record.model_iters_to_target;
  row.final_val_loss = record.final_val_loss;
  row.unrecoverable = record.unrecoverable;

  // Cost accounting stops at the convergence point when it was reached,
  // otherwise covers the whole run.
  const long horizon = record.slots_to_target >= 0 ? record.slots_to_target : record.slots_run;
  const long model_iters =
      record.slots_to_target >= 0 ? record.model_iters_to_target : record.model_iterations;
  std::vector<failures::FailureEvent> events;
  for (const auto& e : trace.events)
    if (e.iteration <= horizon) events.push_back(e);
  row.train_time_h =
      cost::train_time(model_iters, per_iter, events, sc, profile, params).hours;
  return row;
}

}  // namespace

std::vector<CompareRow> compare_strategies(const ExperimentConfig& base,
                                           const std::vector<recovery::StrategyConfig>& strategies,
                                           const failures::FailureTrace& trace) {
  std::vector<CompareRow> rows;
  rows.reserve(strategies.size());
  for (const auto& strategy : strategies) {
    ExperimentConfig cfg = base;
    cfg.strategy = strategy;
    RunRecord record;
    if (!cfg.output_dir.empty()) {
      const std::string dir = cfg.output_dir + "/" + recovery::to_string(strategy.kind) + "-s" +
                              std::to_string(cfg.seed);
      record = run_experiment_to_dir(cfg, trace, cfg.seed, dir);
    } else {
      record = run_experiment(cfg, trace, cfg.seed);
    }
    rows.push_back(make_row(cfg, strategy, trace, record));
  }
  return rows;
}

std::vector<CompareRow> compare_strategies(const ExperimentConfig& base,
                                           const std::vector<recovery::StrategyConfig>& strategies,
                                           const std::vector<failures::FailureTrace>& traces) {
  if (traces.size() != strategies.size())
    throw ConfigError("compare: one trace per strategy required");
  for (std::size_t i = 1; i < traces.size(); ++i)
    if (failures::serialize_trace(traces[i]) != failures::serialize_trace(traces.front()))
      throw ConfigError("compare: strategies must share one failure trace (fairness)");
  return compare_strategies(base, strategies, traces.front());
}

std::string comparison_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "# format_version=1\n";
  out << "strategy,iteration_time_s,iters_to_target,model_iters_to_target,train_time_h,final_val_loss,"
         "unrecoverable\n";
  for (const auto& r : rows)
    out << r.strategy << ',' << fmt(r.iteration_time_s) << ',' << r.slots_to_target << ','
        << r.model_iters_to_target << ',' << fmt(r.train_time_h) << ',' << fmt(r.final_val_loss) << ','
        << (r.unrecoverable ? 1 : 0) << '\n';
  return out.str();
}

std::string comparison_table(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-20s %16s %16s %14s %14s %6s\n", "strategy", "iter time (s)",
                "iters to tgt", "train time (h)", "final val", "status");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-20s %16.3f %16ld %14.3f %14.6g %6s\n", r.strategy.c_str(),
                  r.iteration_time_s, r.slots_to_target, r.train_time_h, r.final_val_loss,
                  r.unrecoverable ? "DEAD" : "ok");
    out << line;
  }
  return out.str();
}

DeltaReport estimate_delta(const ModelState& model, const data::TaskContext& task,
                           std::size_t probe_size) {
  const ModelSpec& spec = model.spec;
  data::Batch probe = data::validation_set(task, probe_size);
  std::vector<int> order(spec.num_stages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);

  const std::vector<double> all = model.all_weights_flat();
  const double norm_all = std::sqrt(kernels::sum_squares(all.data(), all.size()));
  ForwardCache full = forward(model, order, probe.x);
  const double norm_out = std::sqrt(kernels::sum_squares(full.predictions.ptr(), full.predictions.size()));

  DeltaReport report;
  for (std::size_t layer = 1; layer <= spec.num_layers; ++layer) {
    const int sid = spec.stage_of_layer(layer);
    const StageState& stage = model.stages[static_cast<std::size_t>(sid - 1)];
    const ResidualBlock& blk = stage.blocks[layer - spec.stage_range(sid).first];
    const double wnorm = std::sqrt(kernels::sum_squares(blk.w1.ptr(), blk.w1.size()) +
                                   kernels::sum_squares(blk.w2.ptr(), blk.w2.size()));

    std::vector<int> mask(spec.num_layers, 1);
    mask[layer - 1] = 0;
    ForwardCache masked = forward_masked(model, order, probe.x, mask);
    const double diff = std::sqrt(kernels::sum_squared_diff(
        full.predictions.ptr(), masked.predictions.ptr(), full.predictions.size()));

    DeltaRow row;
    row.layer = layer;
    row.param_ratio = norm_all > 0.0 ? wnorm / norm_all : 0.0;
    row.func_ratio = norm_out > 0.0 ? diff / norm_out : 0.0;
    report.rows.push_back(row);
    report.delta_param = std::max(report.delta_param, row.param_ratio);
    report.delta_func = std::max(report.delta_func, row.func_ratio);
  }
  return report;
}

std::string delta_csv(const DeltaReport& report) {
  std::ostringstream out;
  out << "# format_version=1\n";
  out << "layer,param_ratio,func_ratio\n";
  for (const auto& r : report.rows)
    out << r.layer << ',' << fmt(r.param_ratio) << ',' << fmt(r.func_ratio) << '\n';
  return out.str();
}

SwapAblation ablation_swap(const ExperimentConfig& config, std::uint64_t seed) {
  ExperimentConfig base = config;
  base.model.finalize();
  base.p_hour = 0.0;
  base.p_iter = -1.0;
  base.trace_path.clear();
  base.strategy.kind = recovery::StrategyKind::NoFailures;

  failures::FailureTrace empty;
  empty.spec.eligible_stages = base.resolved_eligible();
  empty.spec.seed = seed;

  SwapAblation ab;
  ExperimentConfig off = base;
  off.schedule_mode = "standard";
  ab.off = run_experiment(off, empty, seed);
  ExperimentConfig on = base;
  on.schedule_mode = "swapped-half";
  ab.on = run_experiment(on, empty, seed);

  // Milestones: fractions of the swap-off run's total validation-loss drop.
  const double v0 = ab.off.evals.front().val_loss;
  const double vf = ab.off.final_val_loss;
  for (double frac : {0.25, 0.5, 0.75, 0.9}) {
    MilestoneRow row;
    row.level = v0 - frac * (v0 - vf);
    auto first_at = [&](const RunRecord& r) {
      for (const auto& e : r.evals)
        if (e.val_loss <= row.level) return e.iter;
      return -1L;
    };
    row.iter_off = first_at(ab.off);
    row.iter_on = first_at(ab.on);
    ab.milestones.push_back(row);
  }
  return ab;
}

}  // namespace ckfree::harness
