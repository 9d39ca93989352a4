// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckfree/failures.hpp"
#include "ckfree/matrix.hpp"
#include "ckfree/model.hpp"
#include "ckfree/recovery.hpp"

namespace ckfree::cost {

/// Latency/bandwidth matrix over named sites plus the stage-to-site map.
struct NetworkProfile {
  std::vector<std::string> locations;
  Matrix latency_s;       // seconds, square over locations
  Matrix bandwidth_bps;   // bytes/second, square over locations
  std::vector<int> assignment;  // stage id - 1 -> location index

  int num_stages() const { return static_cast<int>(assignment.size()); }
  void validate() const;

  double link_latency(int stage_a, int stage_b) const;
  double link_bandwidth(int stage_a, int stage_b) const;
  /// Worst-case path used for checkpoint storage transfers.
  double storage_latency() const;
  double storage_bandwidth() const;

  /// 5-site profile with 50-150 ms latencies and 100-500 Mb/s links,
  /// stages assigned round-robin.
  static NetworkProfile synthetic_default(int num_stages);
};

std::string serialize_profile(const NetworkProfile& profile);
NetworkProfile parse_profile(const std::string& text, const std::string& context_name = "<string>");
void save_profile(const NetworkProfile& profile, const std::string& path);
NetworkProfile load_profile(const std::string& path);

/// Per-stage compute costs and message sizes driving the accounting.
struct CostParams {
  double fwd_seconds = 1.0;  // per stage per microbatch
  double bwd_seconds = 2.0;  // per stage per microbatch; must be >= fwd_seconds
  std::uint64_t activation_bytes = 1 << 16;
  std::uint64_t stage_weight_bytes = 1 << 20;
  std::uint64_t edge_weight_bytes = 1 << 14;
  std::uint64_t full_model_bytes = 1 << 22;
  int num_microbatches = 8;

  void validate() const;  // warns to stderr when edge_weight_bytes >= stage_weight_bytes
  static CostParams from_model(const ModelSpec& spec, std::size_t batch_size, int num_microbatches,
                               double fwd_seconds, double bwd_seconds);
};

struct IterationCost {
  double compute = 0.0;
  double communication = 0.0;
  double checkpoint_overhead = 0.0;
  double total() const { return compute + communication + checkpoint_overhead; }
};

/// Per-iteration cost. Compute serializes the numerical dependency chain:
/// microbatches x sum over stages of (fwd+bwd); redundant computation adds one
/// forward per stage per microbatch at half microbatch size and doubled count.
/// Communication charges one activation transfer per stage boundary per
/// microbatch, plus strategy extras (edge replica refresh, redundant weight
/// refresh). Checkpoint uploads amortize over the interval.
IterationCost iteration_cost(const recovery::StrategyConfig& strategy, const NetworkProfile& profile,
                             const CostParams& params);
double iteration_time(const recovery::StrategyConfig& strategy, const NetworkProfile& profile,
                      const CostParams& params);

/// Seconds to provision a replacement for failed_stage under the strategy.
double recovery_time(const recovery::StrategyConfig& strategy, const NetworkProfile& profile,
                     const CostParams& params, int failed_stage);

struct TimeBreakdown {
  double compute = 0.0;
  double communication = 0.0;
  double checkpoint_overhead = 0.0;
  double recovery = 0.0;
  double rollback_lost = 0.0;
  double total() const { return compute + communication + checkpoint_overhead + recovery + rollback_lost; }
};

struct TrainTime {
  double hours = 0.0;
  TimeBreakdown breakdown;
};

/// Wall clock to the convergence point: iterations_to_target full iterations
/// (productive model iterations), plus per-event recovery, plus (checkpointing
/// only) the iterations replayed after each rollback. Simultaneous failures in
/// one iteration trigger a single rollback.
TrainTime train_time(long iterations_to_target, const IterationCost& per_iteration,
                     const std::vector<failures::FailureEvent>& events,
                     const recovery::StrategyConfig& strategy, const NetworkProfile& profile,
                     const CostParams& params);

}  // namespace ckfree::cost
