// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ckfree/model.hpp"

namespace ckfree::pipeline {

enum class ScheduleMode { Standard, SwappedHalf };

/// Stage execution order for one microbatch. Edge layers always run first/last
/// and are not part of the sequence.
struct ExecutionOrder {
  std::vector<int> sequence;

  /// (1, 2, ..., s)
  static ExecutionOrder standard(int num_stages);
  /// (2, 1, 3, ..., s-2, s, s-1); requires s >= 4 so the two swaps are disjoint.
  static ExecutionOrder swapped(int num_stages);

  bool is_standard() const;
};

struct MicrobatchSchedule {
  int num_microbatches = 1;
  std::vector<ExecutionOrder> orders;  // one per microbatch

  int swapped_count() const;
};

/// SwappedHalf places the swapped order at even microbatch positions 0,2,4,...
/// and requires an even microbatch count.
MicrobatchSchedule build_schedule(int num_microbatches, ScheduleMode mode, int num_stages);

struct IterationResult {
  double train_loss = 0.0;
  std::vector<double> omegas;
  long iteration = 0;
};

/// One training iteration: splits the batch into equal contiguous microbatches,
/// runs forward/backward per microbatch with its order, averages gradients, and
/// applies one Adam step per stage and for the edge layers. Per-stage learning
/// rates come from the stage states.
IterationResult run_iteration(ModelState& model, const MicrobatchSchedule& schedule, const Matrix& x,
                              const Targets& y, long iteration);

/// 1-based layer ids in application order for the given stage order; lets
/// independent oracles evaluate the swapped composite.
std::vector<std::size_t> effective_function(const ExecutionOrder& order, const ModelSpec& spec);

}  // namespace ckfree::pipeline
