// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ckfree/model.hpp"
#include "ckfree/param_vector.hpp"

namespace ckfree::recovery {

enum class StrategyKind {
  NoFailures,
  Checkpointing,
  RedundantComputation,
  CheckFree,
  CheckFreePlus,
  ReinitRandom,
  ReinitCopy,
  ReinitUniformAvg,
};

const char* to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& name);

/// What a recovered stage's Adam state starts from.
enum class MomentRecovery { Fresh, Averaged };

struct StrategyConfig {
  StrategyKind kind = StrategyKind::NoFailures;
  long checkpoint_interval = 100;
  double lr_bump = 1.1;
  bool blocking_checkpoint_upload = false;
  MomentRecovery recovered_moments = MomentRecovery::Fresh;

  void validate() const;
  /// Strategies that rebuild a failed stage from neighbor weights and hence
  /// need all stages shaped alike.
  bool neighbor_based() const;
  bool uses_swapped_schedule() const { return kind == StrategyKind::CheckFreePlus; }
};

/// Gradient-norm-weighted average of the two neighbor stages:
/// (omega_prev*W_prev + omega_next*W_next) / (omega_prev + omega_next).
/// Both omegas zero (failure before any backward) falls back to the uniform
/// average; `degenerate` reports that case when non-null.
ParameterVector recover_checkfree(const ParameterVector& w_prev, const ParameterVector& w_next,
                                  double omega_prev, double omega_next, bool* degenerate = nullptr);

/// lr' = factor * lr. Applied to the recovered stage only.
double bump_lr(double lr, double factor);

/// Live copies of the edge layers held on the neighboring stages' nodes.
struct EdgeReplica {
  ParameterVector embed;
  ParameterVector deembed;
  long staleness = -1;  // -1 until first refresh; 0 right after a refresh

  bool fresh() const { return staleness == 0; }
};

void refresh_edge_replicas(const EdgeLayers& edges, EdgeReplica& replica);
void age_edge_replicas(EdgeReplica& replica);

enum class EdgeSide { First, Last };

/// First/last stage recovery: the failed stage becomes a copy of its single
/// neighbor and the (de-)embedding layer is restored bit-exactly from the
/// replica. Only the swapped-schedule strategy supports this; anything else
/// raises UnsupportedRecoveryError.
std::pair<ParameterVector, ParameterVector> recover_edge_stage(EdgeSide side,
                                                               const ParameterVector& neighbor_weights,
                                                               const EdgeReplica& replica,
                                                               StrategyKind active);

ParameterVector reinit_copy(const ParameterVector& w_prev);
ParameterVector reinit_uniform_avg(const ParameterVector& w_prev, const ParameterVector& w_next);
/// Fresh stage weights from the standard init scheme.
ParameterVector reinit_random(const ModelSpec& spec, int stage_id, std::uint64_t seed);

/// ||recover_checkfree(...) - W_failed||^2, the weight-space initialization
/// error of a failure (measurable only in simulation).
double reduction_error(const ParameterVector& w_prev, const ParameterVector& w_failed,
                       const ParameterVector& w_next, double omega_prev, double omega_next);

// --- Checkpointing ---

/// Full training state at an iteration boundary. Restoring and re-serializing
/// yields byte-identical bytes.
struct CheckpointSnapshot {
  long iteration = 0;           // model iterations completed at capture
  std::uint64_t data_cursor = 0;
  ModelState model;
};

CheckpointSnapshot checkpoint_save(const ModelState& model, long iteration, std::uint64_t data_cursor);
void checkpoint_restore(const CheckpointSnapshot& snapshot, ModelState& model, long& iteration,
                        std::uint64_t& data_cursor);

/// Versioned binary container: "ckfree-ckpt v1" header, then length-prefixed
/// little-endian f64 arrays in (edges, stage weights 1..s, stage optimizer
/// state 1..s, data cursor) order.
std::vector<std::uint8_t> serialize_checkpoint(const CheckpointSnapshot& snapshot);
CheckpointSnapshot deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const ModelSpec& spec);
void save_checkpoint_file(const CheckpointSnapshot& snapshot, const std::string& path);
CheckpointSnapshot load_checkpoint_file(const std::string& path, const ModelSpec& spec);

}  // namespace ckfree::recovery
