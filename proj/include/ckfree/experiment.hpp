// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ckfree/cost_model.hpp"
#include "ckfree/dataset.hpp"
#include "ckfree/failures.hpp"
#include "ckfree/model.hpp"
#include "ckfree/pipeline.hpp"
#include "ckfree/recovery.hpp"

namespace ckfree::harness {

/// Everything one reproducible experiment needs. A config plus a seed fully
/// determines the run, byte for byte.
struct ExperimentConfig {
  ModelSpec model;
  recovery::StrategyConfig strategy;

  // Failure source: an explicit trace wins; otherwise a trace is generated
  // from p_hour (or directly from p_iter, modeled as one-hour iterations).
  std::string trace_path;
  double p_hour = 0.0;
  double p_iter = -1.0;             // >= 0 takes precedence over p_hour
  double iteration_seconds = 120.0; // hourly-rate conversion + trace metadata
  std::string eligible = "auto";    // auto | intermediate | all

  long total_iterations = 2000;
  std::size_t batch_size = 256;
  int num_microbatches = 8;
  double lr = 3e-4;
  std::optional<double> target_val_loss;
  long eval_interval = 25;
  std::size_t val_size = 1024;
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // multi-seed sweeps (CLI); empty -> {seed}
  std::string output_dir;

  std::string schedule_mode = "auto";  // auto | standard | swapped-half
  long swap_from_iteration = 0;        // swapped orders apply to iterations > this

  double fwd_seconds = 1.0;
  double bwd_seconds = 2.0;
  std::string profile_path;  // empty -> synthetic 5-site default

  void validate() const;
  pipeline::ScheduleMode resolved_schedule() const;
  std::vector<int> resolved_eligible() const;
  cost::NetworkProfile resolved_profile() const;
  cost::CostParams resolved_cost_params() const;
  /// Trace per the config: loaded from trace_path, or generated.
  failures::FailureTrace resolve_trace(std::uint64_t seed_override) const;
  /// Key-value dump, parseable as a config file again.
  std::string to_config_string() const;
};

struct EvalPoint {
  long iter = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_hours = 0.0;
};

struct FailureRecord {
  long iter = 0;
  int stage = 0;
  std::string action;
  double reduction_error = 0.0;
  double recovery_s = 0.0;
  double loss_spike = 0.0;
};

struct RunRecord {
  std::vector<EvalPoint> evals;
  std::vector<FailureRecord> events;
  long slots_run = 0;          // executed iteration slots
  long model_iterations = 0;   // productive iterations; < slots_run after rollbacks
  long slots_to_target = -1;
  long model_iters_to_target = -1;
  bool unrecoverable = false;
  std::string unrecoverable_reason;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double total_hours = 0.0;
  double iteration_time_s = 0.0;  // modeled per-iteration seconds used for wall clock
};

/// Runs one experiment against a pre-generated trace. Deterministic given
/// (config, seed). final_model, when non-null, receives the end-of-run state.
RunRecord run_experiment(const ExperimentConfig& config, const failures::FailureTrace& trace,
                         std::uint64_t seed, ModelState* final_model = nullptr);

/// The task (teacher + data streams) a run with this seed trains against.
data::TaskContext task_for_seed(const ModelSpec& spec, std::uint64_t run_seed);

/// run_experiment plus metrics.csv / events.csv / summary.json / config.resolved
/// under directory `dir` (created if missing).
RunRecord run_experiment_to_dir(const ExperimentConfig& config, const failures::FailureTrace& trace,
                                std::uint64_t seed, const std::string& dir);

std::string metrics_csv(const RunRecord& record);
std::string events_csv(const RunRecord& record);
std::string summary_json(const ExperimentConfig& config, const RunRecord& record, std::uint64_t seed);

struct CompareRow {
  std::string strategy;
  double iteration_time_s = 0.0;
  long slots_to_target = -1;
  long model_iters_to_target = -1;
  double train_time_h = 0.0;
  double final_val_loss = 0.0;
  bool unrecoverable = false;
};

/// Runs every strategy against the same trace/seed/model and assembles the
/// per-strategy cost table. All runs share the single trace by construction.
std::vector<CompareRow> compare_strategies(const ExperimentConfig& base,
                                           const std::vector<recovery::StrategyConfig>& strategies,
                                           const failures::FailureTrace& trace);

/// Per-strategy traces variant; refuses to run unless all traces are identical.
std::vector<CompareRow> compare_strategies(const ExperimentConfig& base,
                                           const std::vector<recovery::StrategyConfig>& strategies,
                                           const std::vector<failures::FailureTrace>& traces);

std::string comparison_csv(const std::vector<CompareRow>& rows);
std::string comparison_table(const std::vector<CompareRow>& rows);

struct DeltaRow {
  std::size_t layer = 0;
  double param_ratio = 0.0;  // ||removed weights|| / ||all weights||
  double func_ratio = 0.0;   // ||F(x) - F_masked(x)|| / ||F(x)|| on probe data
};

struct DeltaReport {
  std::vector<DeltaRow> rows;
  double delta_param = 0.0;  // max over single-layer omissions
  double delta_func = 0.0;
};

DeltaReport estimate_delta(const ModelState& model, const data::TaskContext& task,
                           std::size_t probe_size);
std::string delta_csv(const DeltaReport& report);

struct MilestoneRow {
  double level = 0.0;   // validation loss milestone
  long iter_off = -1;   // first iteration at or below the level, swap off
  long iter_on = -1;    // same, swap on
};

struct SwapAblation {
  RunRecord off;
  RunRecord on;
  std::vector<MilestoneRow> milestones;
};

/// Paired zero-failure runs with the swapped schedule off/on, same seed.
SwapAblation ablation_swap(const ExperimentConfig& config, std::uint64_t seed);

int cli_main(int argc, char** argv);

}  // namespace ckfree::harness
