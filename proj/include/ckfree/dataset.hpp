// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "ckfree/model.hpp"

namespace ckfree::data {

/// Teacher-student task: inputs are uniform in [-1,1], targets come from a
/// frozen random teacher of the same architecture (argmax logits for
/// classification). Batches are addressed purely by (seed, iteration), so any
/// replay or strategy sees identical data.
struct TaskContext {
  ModelSpec spec;
  ModelState teacher;
  std::uint64_t data_seed = 0;
};

TaskContext make_task(const ModelSpec& spec, std::uint64_t task_seed);

struct Batch {
  Matrix x;
  Targets y;
};

/// Training batch for a model iteration (1-based).
Batch training_batch(const TaskContext& task, long model_iteration, std::size_t batch_size);

/// Fixed held-out set, disjoint stream from all training batches.
Batch validation_set(const TaskContext& task, std::size_t size);

}  // namespace ckfree::data
