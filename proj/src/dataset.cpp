// SPDX-License-Identifier: Apache-2.0

#include "ckfree/dataset.hpp"

#include "ckfree/rng.hpp"

namespace ckfree::data {

namespace {

constexpr std::uint64_t kStreamTrain = 1;
constexpr std::uint64_t kStreamValidation = 2;
constexpr std::uint64_t kStreamTeacher = 3;

Batch make_batch(const TaskContext& task, std::uint64_t stream, std::uint64_t index,
                 std::size_t rows) {
  Batch batch;
  batch.x = Matrix(rows, task.spec.input_dim);
  rng::CounterRng gen(rng::derive_key(task.data_seed, stream, index));
  for (double& v : batch.x.data) v = gen.uniform(-1.0, 1.0);

  std::vector<int> order(task.spec.num_stages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);
  ForwardCache teacher_out = forward(task.teacher, order, batch.x);

  if (task.spec.task == TaskKind::Regression) {
    batch.y.values = std::move(teacher_out.predictions);
  } else {
    batch.y.labels.resize(rows);
    const Matrix& logits = teacher_out.predictions;
    for (std::size_t i = 0; i < rows; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < logits.cols; ++j)
        if (logits.at(i, j) > logits.at(i, best)) best = j;
      batch.y.labels[i] = static_cast<int>(best);
    }
  }
  return batch;
}

}  // namespace

TaskContext make_task(const ModelSpec& spec, std::uint64_t task_seed) {
  TaskContext task;
  task.spec = spec;
  task.teacher = init_model(spec, rng::derive_key(task_seed, kStreamTeacher), 1.0);
  task.data_seed = task_seed;
  return task;
}

Batch training_batch(const TaskContext& task, long model_iteration, std::size_t batch_size) {
  return make_batch(task, kStreamTrain, static_cast<std::uint64_t>(model_iteration), batch_size);
}

Batch validation_set(const TaskContext& task, std::size_t size) {
  return make_batch(task, kStreamValidation, 0, size);
}

}  // namespace ckfree::data
