// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ckfree/errors.hpp"
#include "ckfree/pipeline.hpp"
#include "test_util.hpp"

using namespace ckfree;
using namespace ckfree::testutil;
using pipeline::ExecutionOrder;
using pipeline::MicrobatchSchedule;
using pipeline::ScheduleMode;

namespace {

Targets teacher_targets(const ModelState& teacher, const Matrix& x) {
  std::vector<int> order(teacher.spec.num_stages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);
  Targets t;
  t.values = forward(teacher, order, x).predictions;
  return t;
}

}  // namespace

TEST_CASE("standard schedule repeats the identity order") {
  MicrobatchSchedule s = pipeline::build_schedule(4, ScheduleMode::Standard, 6);
  REQUIRE(s.orders.size() == 4);
  for (const auto& o : s.orders) CHECK(o.sequence == std::vector<int>{1, 2, 3, 4, 5, 6});
  CHECK(s.swapped_count() == 0);
}

TEST_CASE("swapped_half interleaves the swapped order at even positions, s=6") {
  MicrobatchSchedule s = pipeline::build_schedule(4, ScheduleMode::SwappedHalf, 6);
  const std::vector<int> swapped{2, 1, 3, 4, 6, 5};
  const std::vector<int> standard{1, 2, 3, 4, 5, 6};
  CHECK(s.orders[0].sequence == swapped);
  CHECK(s.orders[1].sequence == standard);
  CHECK(s.orders[2].sequence == swapped);
  CHECK(s.orders[3].sequence == standard);
}

TEST_CASE("swapped_half with two microbatches and s=4") {
  MicrobatchSchedule s = pipeline::build_schedule(2, ScheduleMode::SwappedHalf, 4);
  CHECK(s.orders[0].sequence == std::vector<int>{2, 1, 4, 3});
  CHECK(s.orders[1].sequence == std::vector<int>{1, 2, 3, 4});
  CHECK(s.swapped_count() == 1);
}

TEST_CASE("swapped_half rejects odd microbatch counts and tiny pipelines") {
  CHECK_THROWS_AS(pipeline::build_schedule(3, ScheduleMode::SwappedHalf, 6), ConfigError);
  CHECK_THROWS_AS(pipeline::build_schedule(4, ScheduleMode::SwappedHalf, 3), ConfigError);
}

TEST_CASE("schedule balance and order legality hold for any even count") {
  for (int m : {2, 4, 8, 12}) {
    for (int s : {4, 5, 6, 9}) {
      MicrobatchSchedule sched = pipeline::build_schedule(m, ScheduleMode::SwappedHalf, s);
      CHECK(sched.swapped_count() == m / 2);
      for (const auto& o : sched.orders) {
        if (o.is_standard()) continue;
        // Differs from standard only by the two edge transpositions.
        CHECK(o.sequence[0] == 2);
        CHECK(o.sequence[1] == 1);
        CHECK(o.sequence[static_cast<std::size_t>(s - 2)] == s);
        CHECK(o.sequence[static_cast<std::size_t>(s - 1)] == s - 1);
        for (int i = 2; i < s - 2; ++i) CHECK(o.sequence[static_cast<std::size_t>(i)] == i + 1);
      }
    }
  }
}

TEST_CASE("one microbatch degenerates to a plain optimization step") {
  ModelSpec spec = small_spec();
  ModelState a = init_model(spec, 42, 1e-3);
  ModelState b = a;
  ModelState teacher = init_model(spec, 99, 1e-3);
  Matrix x = random_matrix(8, spec.input_dim, 7);
  Targets y = teacher_targets(teacher, x);

  pipeline::run_iteration(a, pipeline::build_schedule(1, ScheduleMode::Standard, 4), x, y, 1);

  ForwardCache cache = forward(b, {1, 2, 3, 4}, x);
  Gradients g = backward(b, cache, y);
  for (auto& stage : b.stages)
    adam_step(stage, g.stage[static_cast<std::size_t>(stage.stage_id - 1)], stage.lr);
  adam_step_edges(b.edges, g.embed, g.deembed);

  for (std::size_t s = 0; s < a.stages.size(); ++s) {
    const ParameterVector wa = a.stages[s].flat_weights();
    const ParameterVector wb = b.stages[s].flat_weights();
    for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i] == wb[i]);
    CHECK(a.stages[s].omega == b.stages[s].omega);
  }
}

TEST_CASE("microbatch accumulation is equivalent to the full batch") {
  ModelSpec spec = small_spec();
  ModelState teacher = init_model(spec, 99, 1e-3);

  SUBCASE("two identical halves match one pass over their union") {
    Matrix half = random_matrix(6, spec.input_dim, 8);
    Matrix whole(12, spec.input_dim);
    for (std::size_t i = 0; i < half.rows; ++i)
      for (std::size_t j = 0; j < half.cols; ++j) {
        whole.at(i, j) = half.at(i, j);
        whole.at(i + 6, j) = half.at(i, j);
      }
    Targets y = teacher_targets(teacher, whole);

    ModelState a = init_model(spec, 41, 1e-3);
    ModelState b = a;
    pipeline::run_iteration(a, pipeline::build_schedule(2, ScheduleMode::Standard, 4), whole, y, 1);
    pipeline::run_iteration(b, pipeline::build_schedule(1, ScheduleMode::Standard, 4), whole, y, 1);
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
      const ParameterVector wa = a.stages[s].flat_weights();
      const ParameterVector wb = b.stages[s].flat_weights();
      for (std::size_t i = 0; i < wa.size(); ++i) CHECK(std::abs(wa[i] - wb[i]) <= 1e-10);
    }
  }

  SUBCASE("four random microbatches match one pass within 1e-10") {
    Matrix x = random_matrix(16, spec.input_dim, 9);
    Targets y = teacher_targets(teacher, x);
    ModelState a = init_model(spec, 43, 1e-3);
    ModelState b = a;
    pipeline::run_iteration(a, pipeline::build_schedule(4, ScheduleMode::Standard, 4), x, y, 1);
    pipeline::run_iteration(b, pipeline::build_schedule(1, ScheduleMode::Standard, 4), x, y, 1);
    for (std::size_t s = 0; s < a.stages.size(); ++s) {
      const ParameterVector wa = a.stages[s].flat_weights();
      const ParameterVector wb = b.stages[s].flat_weights();
      for (std::size_t i = 0; i < wa.size(); ++i) CHECK(std::abs(wa[i] - wb[i]) <= 1e-10);
    }
  }
}

TEST_CASE("identity stages make swapped and standard schedules agree exactly") {
  ModelSpec spec = small_spec(3, 3, 4, 3, 4, 4);
  ModelState a = init_model(spec, 5, 1e-3);
  for (auto& stage : a.stages)
    for (auto& blk : stage.blocks) {
      for (std::size_t i = 0; i < blk.w1.size(); ++i) blk.w1[i] = 0.0;
      for (std::size_t i = 0; i < blk.w2.size(); ++i) blk.w2[i] = 0.0;
    }
  ModelState b = a;
  ModelState teacher = init_model(spec, 6, 1e-3);
  Matrix x = random_matrix(8, spec.input_dim, 10);
  Targets y = teacher_targets(teacher, x);

  auto ra = pipeline::run_iteration(a, pipeline::build_schedule(2, ScheduleMode::SwappedHalf, 4), x, y, 1);
  auto rb = pipeline::run_iteration(b, pipeline::build_schedule(2, ScheduleMode::Standard, 4), x, y, 1);
  CHECK(ra.train_loss == rb.train_loss);
}

TEST_CASE("effective_function unfolds the stage partition") {
  SUBCASE("standard order, two stages") {
    ModelSpec spec = small_spec(3, 3, 4, 3, 4, 2);
    CHECK(pipeline::effective_function(ExecutionOrder::standard(2), spec) ==
          std::vector<std::size_t>{1, 2, 3, 4});
  }
  SUBCASE("swapped order, four stages of two layers") {
    ModelSpec spec = small_spec(3, 3, 4, 3, 8, 4);
    CHECK(pipeline::effective_function(ExecutionOrder::swapped(4), spec) ==
          std::vector<std::size_t>{3, 4, 1, 2, 7, 8, 5, 6});
  }
  SUBCASE("swapped order, six stages") {
    ModelSpec spec = small_spec(3, 3, 4, 3, 6, 6);
    CHECK(pipeline::effective_function(ExecutionOrder::swapped(6), spec) ==
          std::vector<std::size_t>{2, 1, 3, 4, 6, 5});
  }
}

TEST_CASE("swapped forward equals the oracle over the unfolded layer sequence") {
  ModelSpec spec = small_spec(3, 3, 4, 3, 8, 4);
  ModelState model = init_model(spec, 11, 1e-3);
  Matrix x = random_matrix(5, 3, 12);
  ExecutionOrder order = ExecutionOrder::swapped(4);
  ForwardCache cache = forward(model, order.sequence, x);
  Matrix expect = oracle_forward(model, pipeline::effective_function(order, spec), x);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(cache.predictions.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
}

TEST_CASE("training loop is bit-deterministic for a fixed seed") {
  ModelSpec spec = small_spec();
  ModelState teacher = init_model(spec, 15, 1e-3);
  std::vector<double> first, second;
  for (int run = 0; run < 2; ++run) {
    ModelState model = init_model(spec, 16, 1e-3);
    auto& sink = run == 0 ? first : second;
    for (long iter = 1; iter <= 10; ++iter) {
      Matrix x = random_matrix(8, spec.input_dim, rng::derive_key(17, static_cast<std::uint64_t>(iter)));
      Targets y = teacher_targets(teacher, x);
      auto res = pipeline::run_iteration(model, pipeline::build_schedule(2, ScheduleMode::Standard, 4),
                                         x, y, iter);
      sink.push_back(res.train_loss);
    }
  }
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("indivisible batches are configuration errors") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 18, 1e-3);
  ModelState teacher = init_model(spec, 19, 1e-3);
  Matrix x = random_matrix(6, spec.input_dim, 20);
  Targets y = teacher_targets(teacher, x);
  CHECK_THROWS_AS(
      pipeline::run_iteration(model, pipeline::build_schedule(4, ScheduleMode::Standard, 4), x, y, 1),
      ConfigError);
}
