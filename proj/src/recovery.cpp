// SPDX-License-Identifier: Apache-2.0

#include "ckfree/recovery.hpp"

#include <iostream>

#include "ckfree/errors.hpp"
#include "ckfree/kernels.hpp"

namespace ckfree::recovery {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::NoFailures: return "no-failures";
    case StrategyKind::Checkpointing: return "checkpointing";
    case StrategyKind::RedundantComputation: return "redundant";
    case StrategyKind::CheckFree: return "checkfree";
    case StrategyKind::CheckFreePlus: return "checkfree-plus";
    case StrategyKind::ReinitRandom: return "reinit-random";
    case StrategyKind::ReinitCopy: return "reinit-copy";
    case StrategyKind::ReinitUniformAvg: return "reinit-uniform-avg";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "no-failures") return StrategyKind::NoFailures;
  if (name == "checkpointing") return StrategyKind::Checkpointing;
  if (name == "redundant") return StrategyKind::RedundantComputation;
  if (name == "checkfree") return StrategyKind::CheckFree;
  if (name == "checkfree-plus") return StrategyKind::CheckFreePlus;
  if (name == "reinit-random") return StrategyKind::ReinitRandom;
  if (name == "reinit-copy") return StrategyKind::ReinitCopy;
  if (name == "reinit-uniform-avg") return StrategyKind::ReinitUniformAvg;
  throw ConfigError("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (kind == StrategyKind::Checkpointing && checkpoint_interval <= 0)
    throw ConfigError("checkpoint interval must be positive");
  if (lr_bump <= 0.0) throw ConfigError("lr_bump must be positive");
}

bool StrategyConfig::neighbor_based() const {
  switch (kind) {
    case StrategyKind::CheckFree:
    case StrategyKind::CheckFreePlus:
    case StrategyKind::ReinitRandom:
    case StrategyKind::ReinitCopy:
    case StrategyKind::ReinitUniformAvg:
      return true;
    default:
      return false;
  }
}

ParameterVector recover_checkfree(const ParameterVector& w_prev, const ParameterVector& w_next,
                                  double omega_prev, double omega_next, bool* degenerate) {
  if (!w_prev.same_shape(w_next)) throw ConfigError("neighbor stage weights differ in shape");
  if (omega_prev < 0.0 || omega_next < 0.0) throw ConfigError("gradient norms must be nonnegative");
  if (degenerate) *degenerate = false;
  double wp = omega_prev, wn = omega_next;
  if (wp + wn == 0.0) {
    // Failure before the first backward pass of both neighbors.
    std::cerr << "warning: both neighbor gradient norms are zero; falling back to uniform average\n";
    if (degenerate) *degenerate = true;
    wp = wn = 1.0;
  }
  const double denom = wp + wn;
  ParameterVector out = ParameterVector::zeros(w_prev.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (wp * w_prev[i] + wn * w_next[i]) / denom;
  return out;
}

double bump_lr(double lr, double factor) {
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  return factor * lr;
}

void refresh_edge_replicas(const EdgeLayers& edges, EdgeReplica& replica) {
  replica.embed = edges.embed;
  replica.deembed = edges.deembed;
  replica.staleness = 0;
}

void age_edge_replicas(EdgeReplica& replica) {
  if (replica.staleness >= 0) ++replica.staleness;
}

std::pair<ParameterVector, ParameterVector> recover_edge_stage(EdgeSide side,
                                                               const ParameterVector& neighbor_weights,
                                                               const EdgeReplica& replica,
                                                               StrategyKind active) {
  if (active != StrategyKind::CheckFreePlus)
    throw UnsupportedRecoveryError(
        std::string("strategy '") + to_string(active) + "' cannot recover the " +
        (side == EdgeSide::First ? "first" : "last") + " stage (single neighbor, no edge replica)");
  if (!replica.fresh()) throw ConfigError("edge replica is stale; refresh must precede recovery");
  ParameterVector edge = side == EdgeSide::First ? replica.embed : replica.deembed;
  return {neighbor_weights, std::move(edge)};
}

ParameterVector reinit_copy(const ParameterVector& w_prev) { return w_prev; }

ParameterVector reinit_uniform_avg(const ParameterVector& w_prev, const ParameterVector& w_next) {
  if (!w_prev.same_shape(w_next)) throw ConfigError("neighbor stage weights differ in shape");
  ParameterVector out = ParameterVector::zeros(w_prev.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (w_prev[i] + w_next[i]);
  return out;
}

ParameterVector reinit_random(const ModelSpec& spec, int stage_id, std::uint64_t seed) {
  std::vector<ResidualBlock> blocks = init_stage_blocks(spec, stage_id, seed);
  StageState tmp;
  tmp.stage_id = stage_id;
  tmp.blocks = std::move(blocks);
  return tmp.flat_weights();
}

double reduction_error(const ParameterVector& w_prev, const ParameterVector& w_failed,
                       const ParameterVector& w_next, double omega_prev, double omega_next) {
  if (!w_prev.same_shape(w_failed) || !w_next.same_shape(w_failed))
    throw ConfigError("reduction_error requires equally shaped stages");
  ParameterVector recovered = recover_checkfree(w_prev, w_next, omega_prev, omega_next);
  return kernels::sum_squared_diff(recovered.ptr(), w_failed.ptr(), recovered.size());
}

}  // namespace ckfree::recovery
