// SPDX-License-Identifier: Apache-2.0

#include "ckfree/pipeline.hpp"

#include <algorithm>

#include "ckfree/errors.hpp"

namespace ckfree::pipeline {

ExecutionOrder ExecutionOrder::standard(int num_stages) {
  ExecutionOrder o;
  o.sequence.resize(static_cast<std::size_t>(num_stages));
  for (int i = 0; i < num_stages; ++i) o.sequence[static_cast<std::size_t>(i)] = i + 1;
  return o;
}

ExecutionOrder ExecutionOrder::swapped(int num_stages) {
  if (num_stages < 4)
    throw ConfigError("swapped order requires at least 4 stages (first and last pairs must be disjoint)");
  ExecutionOrder o = standard(num_stages);
  std::swap(o.sequence[0], o.sequence[1]);
  std::swap(o.sequence[static_cast<std::size_t>(num_stages - 2)],
            o.sequence[static_cast<std::size_t>(num_stages - 1)]);
  return o;
}

bool ExecutionOrder::is_standard() const {
  for (std::size_t i = 0; i < sequence.size(); ++i)
    if (sequence[i] != static_cast<int>(i + 1)) return false;
  return true;
}

int MicrobatchSchedule::swapped_count() const {
  int n = 0;
  for (const auto& o : orders)
    if (!o.is_standard()) ++n;
  return n;
}

MicrobatchSchedule build_schedule(int num_microbatches, ScheduleMode mode, int num_stages) {
  if (num_microbatches < 1) throw ConfigError("microbatch count must be positive");
  MicrobatchSchedule s;
  s.num_microbatches = num_microbatches;
  s.orders.reserve(static_cast<std::size_t>(num_microbatches));
  if (mode == ScheduleMode::Standard) {
    for (int i = 0; i < num_microbatches; ++i) s.orders.push_back(ExecutionOrder::standard(num_stages));
    return s;
  }
  if (num_microbatches % 2 != 0)
    throw ConfigError("swapped_half schedule requires an even microbatch count");
  for (int i = 0; i < num_microbatches; ++i)
    s.orders.push_back(i % 2 == 0 ? ExecutionOrder::swapped(num_stages)
                                  : ExecutionOrder::standard(num_stages));
  return s;
}

IterationResult run_iteration(ModelState& model, const MicrobatchSchedule& schedule, const Matrix& x,
                              const Targets& y, long iteration) {
  const int m = schedule.num_microbatches;
  if (static_cast<int>(schedule.orders.size()) != m)
    throw ConfigError("schedule order count does not match microbatch count");
  if (x.rows == 0 || x.rows % static_cast<std::size_t>(m) != 0)
    throw ConfigError("batch size must be divisible by the microbatch count");
  const std::size_t mb_rows = x.rows / static_cast<std::size_t>(m);

  Gradients total = Gradients::zeros_like(model);
  for (int k = 0; k < m; ++k) {
    const std::size_t first = static_cast<std::size_t>(k) * mb_rows;
    Matrix xk = x.row_slice(first, mb_rows);
    Targets yk;
    if (model.spec.task == TaskKind::Regression) {
      yk.values = y.values.row_slice(first, mb_rows);
    } else {
      yk.labels.assign(y.labels.begin() + static_cast<std::ptrdiff_t>(first),
                       y.labels.begin() + static_cast<std::ptrdiff_t>(first + mb_rows));
    }
    ForwardCache cache = forward(model, schedule.orders[static_cast<std::size_t>(k)].sequence, xk, iteration);
    Gradients g = backward(model, cache, yk);
    total.accumulate(g);
  }
  total.scale_all(1.0 / static_cast<double>(m));
  const double mean_loss = total.loss;  // scale_all already divided the summed loss

  for (auto& stage : model.stages)
    adam_step(stage, total.stage[static_cast<std::size_t>(stage.stage_id - 1)], stage.lr);
  adam_step_edges(model.edges, total.embed, total.deembed);

  IterationResult res;
  res.train_loss = mean_loss;
  res.iteration = iteration;
  res.omegas.reserve(model.stages.size());
  for (const auto& stage : model.stages) res.omegas.push_back(stage.omega);
  return res;
}

std::vector<std::size_t> effective_function(const ExecutionOrder& order, const ModelSpec& spec) {
  if (order.sequence.size() != spec.num_stages)
    throw ConfigError("execution order length must equal num_stages");
  std::vector<std::size_t> layers;
  layers.reserve(spec.num_layers);
  for (int sid : order.sequence) {
    const LayerRange& r = spec.stage_range(sid);
    for (std::size_t l = r.first; l <= r.last; ++l) layers.push_back(l);
  }
  return layers;
}

}  // namespace ckfree::pipeline
