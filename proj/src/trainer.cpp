// SPDX-License-Identifier: Apache-2.0
//
// The failure-injected training loop. Two counters matter: the slot (executed
// iterations, the time axis shared with the failure trace) and the model
// iteration (productive progress, which rolls back on checkpoint restores and
// addresses the data stream). They coincide for every strategy except
// checkpointing.

#include <algorithm>
#include <cmath>
#include <map>

#include "ckfree/errors.hpp"
#include "ckfree/experiment.hpp"
#include "ckfree/kernels.hpp"
#include "ckfree/rng.hpp"

namespace ckfree::harness {

namespace {

constexpr std::uint64_t kSeedModel = 11;
constexpr std::uint64_t kSeedTask = 12;
constexpr std::uint64_t kSeedReinit = 13;

using recovery::StrategyKind;

std::map<long, std::vector<int>> group_events(const failures::FailureTrace& trace) {
  std::map<long, std::vector<int>> grouped;
  for (const auto& e : trace.events) grouped[e.iteration].push_back(e.stage_id);
  for (auto& [slot, stages] : grouped) std::sort(stages.begin(), stages.end());
  return grouped;
}

double weighted_or_uniform(double wp, double wn, double a, double b) {
  if (wp + wn == 0.0) return 0.5 * (a + b);
  return (wp * a + wn * b) / (wp + wn);
}

class Trainer {
 public:
  Trainer(const ExperimentConfig& config, const failures::FailureTrace& trace, std::uint64_t seed)
      : cfg_(config),
        seed_(seed),
        kind_(config.strategy.kind),
        task_(data::make_task(config.model, rng::derive_key(seed, kSeedTask))),
        model_(init_model(config.model, rng::derive_key(seed, kSeedModel), config.lr)),
        val_(data::validation_set(task_, config.val_size)),
        profile_(config.resolved_profile()),
        params_(config.resolved_cost_params()),
        events_(group_events(trace)),
        standard_order_(pipeline::ExecutionOrder::standard(static_cast<int>(config.model.num_stages))),
        schedule_standard_(pipeline::build_schedule(config.num_microbatches,
                                                    pipeline::ScheduleMode::Standard,
                                                    static_cast<int>(config.model.num_stages))) {
    swapped_mode_ = config.resolved_schedule() == pipeline::ScheduleMode::SwappedHalf;
    if (swapped_mode_)
      schedule_swapped_ = pipeline::build_schedule(config.num_microbatches,
                                                   pipeline::ScheduleMode::SwappedHalf,
                                                   static_cast<int>(config.model.num_stages));
  }

  RunRecord run(ModelState* final_model) {
    RunRecord rec;
    rec.iteration_time_s = cost::iteration_time(cfg_.strategy, profile_, params_);

    if (kind_ == StrategyKind::Checkpointing)
      snapshot_ = recovery::checkpoint_save(model_, 0, 0);
    if (kind_ == StrategyKind::CheckFreePlus)
      recovery::refresh_edge_replicas(model_.edges.layers, replica_);

    record_initial_eval(rec);

    bool stopped = false;
    for (long slot = 1; slot <= cfg_.total_iterations && !stopped; ++slot) {
      const bool swap_now = swapped_mode_ && slot > cfg_.swap_from_iteration;
      data::Batch batch = data::training_batch(task_, model_iter_ + 1, cfg_.batch_size);
      pipeline::IterationResult it = pipeline::run_iteration(
          model_, swap_now ? schedule_swapped_ : schedule_standard_, batch.x, batch.y, slot);
      ++model_iter_;
      last_train_loss_ = it.train_loss;

      if (kind_ == StrategyKind::CheckFreePlus)
        recovery::refresh_edge_replicas(model_.edges.layers, replica_);
      if (kind_ == StrategyKind::Checkpointing &&
          model_iter_ % cfg_.strategy.checkpoint_interval == 0)
        snapshot_ = recovery::checkpoint_save(model_, model_iter_,
                                              static_cast<std::uint64_t>(model_iter_));

      rec.slots_run = slot;
      rec.model_iterations = model_iter_;

      if (kind_ != StrategyKind::NoFailures) {
        auto ev = events_.find(slot);
        if (ev != events_.end() && !handle_failures(slot, ev->second, rec)) {
          record_eval(rec, slot);
          stopped = true;
          break;
        }
        rec.model_iterations = model_iter_;  // rollback may have moved it
      }

      if (slot % cfg_.eval_interval == 0 || slot == cfg_.total_iterations) {
        const double val = record_eval(rec, slot);
        if (cfg_.target_val_loss && val <= *cfg_.target_val_loss) {
          rec.slots_to_target = slot;
          rec.model_iters_to_target = model_iter_;
          stopped = true;
        }
      }
    }

    if (rec.evals.empty() || rec.evals.back().iter != rec.slots_run) record_eval(rec, rec.slots_run);
    rec.final_train_loss = last_train_loss_;
    rec.final_val_loss = rec.evals.back().val_loss;
    rec.total_hours = wall_hours(rec.slots_run, rec.iteration_time_s);
    if (final_model) *final_model = model_;
    return rec;
  }

 private:
  double validation_loss() {
    ForwardCache cache = forward(model_, standard_order_.sequence, val_.x);
    return loss_value(model_, cache.predictions, val_.y);
  }

  double wall_hours(long slots, double iteration_time_s) const {
    return (static_cast<double>(slots) * iteration_time_s + recovery_seconds_) / 3600.0;
  }

  void record_initial_eval(RunRecord& rec) {
    data::Batch first = data::training_batch(task_, 1, cfg_.batch_size);
    ForwardCache cache = forward(model_, standard_order_.sequence, first.x);
    last_train_loss_ = loss_value(model_, cache.predictions, first.y);
    record_eval(rec, 0);
  }

  double record_eval(RunRecord& rec, long slot) {
    const double val = validation_loss();
    rec.evals.push_back({slot, last_train_loss_, val, wall_hours(slot, rec.iteration_time_s)});
    return val;
  }

  // Applies the strategy to every stage failed at this slot. Returns false
  // when the run is unrecoverable.
  bool handle_failures(long slot, const std::vector<int>& stages, RunRecord& rec) {
    const int s = static_cast<int>(cfg_.model.num_stages);

    if (kind_ != StrategyKind::Checkpointing) {
      for (std::size_t i = 0; i + 1 < stages.size(); ++i) {
        if (stages[i + 1] == stages[i] + 1) {
          rec.unrecoverable = true;
          rec.unrecoverable_reason = "stages " + std::to_string(stages[i]) + " and " +
                                     std::to_string(stages[i] + 1) + " failed together at iteration " +
                                     std::to_string(slot) + "; no live neighbor to recover from";
          for (int st : stages) rec.events.push_back({slot, st, "unrecoverable", 0.0, 0.0, 0.0});
          return false;
        }
      }
    }

    if (kind_ == StrategyKind::RedundantComputation) {
      // The previous node's hot copy is exact: weights, moments and step all
      // survive, so the simulated state is untouched.
      for (int st : stages) {
        rec.events.push_back({slot, st, "redundant_copy", 0.0,
                              cost::recovery_time(cfg_.strategy, profile_, params_, st), 0.0});
        recovery_seconds_ += rec.events.back().recovery_s;
      }
      return true;
    }

    if (kind_ == StrategyKind::Checkpointing) {
      const double val_pre = validation_loss();
      std::vector<ParameterVector> pre;
      pre.reserve(stages.size());
      for (int st : stages) pre.push_back(model_.stages[static_cast<std::size_t>(st - 1)].flat_weights());

      std::uint64_t cursor = 0;
      recovery::checkpoint_restore(snapshot_, model_, model_iter_, cursor);

      const double val_post = validation_loss();
      for (std::size_t i = 0; i < stages.size(); ++i) {
        const int st = stages[i];
        const ParameterVector now = model_.stages[static_cast<std::size_t>(st - 1)].flat_weights();
        const double red = kernels::sum_squared_diff(pre[i].ptr(), now.ptr(), now.size());
        rec.events.push_back({slot, st, "checkpoint_restore", red,
                              cost::recovery_time(cfg_.strategy, profile_, params_, st),
                              val_post - val_pre});
        recovery_seconds_ += rec.events.back().recovery_s;
      }
      return true;
    }

    // Neighbor-based reinitialization family.
    const double val_pre = validation_loss();
    const std::size_t first_event = rec.events.size();
    for (int st : stages) {
      StageState& failed = model_.stages[static_cast<std::size_t>(st - 1)];
      const ParameterVector old_weights = failed.flat_weights();
      std::string action;

      if (st == 1 || st == s) {
        if (kind_ != StrategyKind::CheckFreePlus) {
          rec.unrecoverable = true;
          rec.unrecoverable_reason = std::string(recovery::to_string(kind_)) +
                                     " cannot recover the " + (st == 1 ? "first" : "last") +
                                     " stage (iteration " + std::to_string(slot) + ")";
          rec.events.push_back({slot, st, "unsupported", 0.0, 0.0, 0.0});
          return false;
        }
        const int neighbor = st == 1 ? 2 : s - 1;
        StageState& nb = model_.stages[static_cast<std::size_t>(neighbor - 1)];
        auto [weights, edge] = recovery::recover_edge_stage(
            st == 1 ? recovery::EdgeSide::First : recovery::EdgeSide::Last, nb.flat_weights(),
            replica_, kind_);
        failed.set_flat_weights(weights);
        if (st == 1) {
          model_.edges.layers.embed = std::move(edge);
          model_.edges.opt_embed.reset(model_.edges.layers.embed.size());
        } else {
          model_.edges.layers.deembed = std::move(edge);
          model_.edges.opt_deembed.reset(model_.edges.layers.deembed.size());
        }
        if (cfg_.strategy.recovered_moments == recovery::MomentRecovery::Averaged)
          failed.opt = nb.opt;  // single neighbor: copy, like the weights
        else
          failed.opt.reset(failed.param_count());
        action = "edge_copy";
      } else {
        StageState& prev = model_.stages[static_cast<std::size_t>(st - 2)];
        StageState& next = model_.stages[static_cast<std::size_t>(st)];
        const ParameterVector wp = prev.flat_weights();
        const ParameterVector wn = next.flat_weights();
        ParameterVector fresh = old_weights;
        switch (kind_) {
          case StrategyKind::CheckFree:
          case StrategyKind::CheckFreePlus: {
            bool degenerate = false;
            fresh = recovery::recover_checkfree(wp, wn, prev.omega, next.omega, &degenerate);
            action = degenerate ? "uniform_avg_fallback" : "checkfree_avg";
            break;
          }
          case StrategyKind::ReinitRandom:
            fresh = recovery::reinit_random(cfg_.model, st,
                                            rng::derive_key(seed_, kSeedReinit,
                                                            static_cast<std::uint64_t>(slot),
                                                            static_cast<std::uint64_t>(st)));
            action = "random_reinit";
            break;
          case StrategyKind::ReinitCopy:
            fresh = recovery::reinit_copy(wp);
            action = "copy_prev";
            break;
          case StrategyKind::ReinitUniformAvg:
            fresh = recovery::reinit_uniform_avg(wp, wn);
            action = "uniform_avg";
            break;
          default:
            throw UsageError("unexpected strategy in neighbor recovery path");
        }
        failed.set_flat_weights(fresh);
        if (cfg_.strategy.recovered_moments == recovery::MomentRecovery::Averaged &&
            (kind_ == StrategyKind::CheckFree || kind_ == StrategyKind::CheckFreePlus)) {
          for (std::size_t i = 0; i < failed.opt.m.size(); ++i) {
            failed.opt.m[i] = weighted_or_uniform(prev.omega, next.omega, prev.opt.m[i], next.opt.m[i]);
            failed.opt.v[i] = weighted_or_uniform(prev.omega, next.omega, prev.opt.v[i], next.opt.v[i]);
          }
          failed.opt.step = std::min(prev.opt.step, next.opt.step);
        } else {
          failed.opt.reset(failed.param_count());
        }
      }

      failed.lr = recovery::bump_lr(failed.lr, cfg_.strategy.lr_bump);
      failed.omega = 0.0;

      const ParameterVector now = failed.flat_weights();
      const double red = kernels::sum_squared_diff(old_weights.ptr(), now.ptr(), now.size());
      rec.events.push_back({slot, st, action, red,
                            cost::recovery_time(cfg_.strategy, profile_, params_, st), 0.0});
      recovery_seconds_ += rec.events.back().recovery_s;
    }

    const double val_post = validation_loss();
    for (std::size_t i = first_event; i < rec.events.size(); ++i)
      rec.events[i].loss_spike = val_post - val_pre;
    return true;
  }

  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  StrategyKind kind_;
  data::TaskContext task_;
  ModelState model_;
  data::Batch val_;
  cost::NetworkProfile profile_;
  cost::CostParams params_;
  std::map<long, std::vector<int>> events_;
  pipeline::ExecutionOrder standard_order_;
  pipeline::MicrobatchSchedule schedule_standard_;
  pipeline::MicrobatchSchedule schedule_swapped_;
  bool swapped_mode_ = false;

  recovery::CheckpointSnapshot snapshot_;
  recovery::EdgeReplica replica_;
  long model_iter_ = 0;
  double last_train_loss_ = 0.0;
  double recovery_seconds_ = 0.0;
};

}  // namespace

RunRecord run_experiment(const ExperimentConfig& config, const failures::FailureTrace& trace,
                         std::uint64_t seed, ModelState* final_model) {
  ExperimentConfig cfg = config;
  cfg.model.finalize();
  cfg.validate();
  trace.validate();
  Trainer trainer(cfg, trace, seed);
  return trainer.run(final_model);
}

data::TaskContext task_for_seed(const ModelSpec& spec, std::uint64_t run_seed) {
  return data::make_task(spec, rng::derive_key(run_seed, kSeedTask));
}

}  // namespace ckfree::harness
