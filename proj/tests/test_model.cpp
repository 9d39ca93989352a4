// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ckfree/errors.hpp"
#include "ckfree/model.hpp"
#include "test_util.hpp"

using namespace ckfree;
using namespace ckfree::testutil;

namespace {

void zero_blocks(ModelState& model) {
  for (auto& stage : model.stages)
    for (auto& blk : stage.blocks) {
      for (std::size_t i = 0; i < blk.w1.size(); ++i) blk.w1[i] = 0.0;
      for (std::size_t i = 0; i < blk.w2.size(); ++i) blk.w2[i] = 0.0;
    }
}

void set_identity(ParameterVector& p, std::size_t dim) {
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) p[i * dim + j] = i == j ? 1.0 : 0.0;
}

std::vector<int> standard_order(const ModelSpec& spec) {
  std::vector<int> order(spec.num_stages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);
  return order;
}

}  // namespace

TEST_CASE("zero blocks with identity edges pass inputs through untouched") {
  ModelSpec spec = small_spec(4, 3, 4, 4, 4, 2);
  ModelState model = init_model(spec, 7, 1e-3);
  zero_blocks(model);
  set_identity(model.edges.layers.embed, 4);
  set_identity(model.edges.layers.deembed, 4);

  Matrix x = random_matrix(6, 4, 123);
  ForwardCache cache = forward(model, standard_order(spec), x);
  REQUIRE(cache.predictions.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(cache.predictions.data[i] == x.data[i]);
}

TEST_CASE("single sparse block matches the hand-evaluated residual formula") {
  ModelSpec spec = small_spec(2, 2, 2, 2, 1, 1);
  ModelState model = init_model(spec, 7, 1e-3);
  zero_blocks(model);
  set_identity(model.edges.layers.embed, 2);
  set_identity(model.edges.layers.deembed, 2);
  ResidualBlock& blk = model.stages[0].blocks[0];
  blk.w1[0] = 0.5;  // only path: x1 -> hidden0
  blk.w2[0] = 2.0;  // hidden0 -> out1

  Matrix x(1, 2);
  x.at(0, 0) = 0.8;
  x.at(0, 1) = -0.3;
  ForwardCache cache = forward(model, {1}, x);
  // x + W2*tanh(W1*x): component 1 gains 2*tanh(0.4), component 2 is untouched.
  CHECK(cache.predictions.at(0, 0) == doctest::Approx(0.8 + 2.0 * std::tanh(0.4)).epsilon(1e-15));
  CHECK(cache.predictions.at(0, 1) == doctest::Approx(-0.3).epsilon(1e-15));
}

TEST_CASE("staged forward matches the monolithic oracle") {
  for (std::size_t stages : {std::size_t(1), std::size_t(2), std::size_t(4)}) {
    ModelSpec spec = small_spec(3, 3, 4, 3, 4, stages);
    ModelState model = init_model(spec, 21, 1e-3);
    Matrix x = random_matrix(5, 3, 456);
    ForwardCache cache = forward(model, standard_order(spec), x);
    std::vector<std::size_t> layers(spec.num_layers);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i] = i + 1;
    Matrix expect = oracle_forward(model, layers, x);
    for (std::size_t i = 0; i < expect.size(); ++i)
      CHECK(cache.predictions.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("perfect predictions give zero loss and zero gradients") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 3, 1e-3);
  Matrix x = random_matrix(4, 3, 9);
  ForwardCache cache = forward(model, standard_order(spec), x);
  Targets targets;
  targets.values = cache.predictions;
  Gradients g = backward(model, cache, targets);
  CHECK(g.loss == 0.0);
  for (const auto& sg : g.stage)
    for (double v : sg) CHECK(v == 0.0);
  for (double v : g.embed) CHECK(v == 0.0);
  for (double v : g.deembed) CHECK(v == 0.0);
}

TEST_CASE("backward without a forward cache is a usage error") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 3, 1e-3);
  ForwardCache empty;
  Targets targets;
  CHECK_THROWS_AS(backward(model, empty, targets), UsageError);
}

namespace {

void check_gradients_fd(const ModelSpec& spec, const std::vector<int>& order, TaskKind task,
                        std::uint64_t seed) {
  ModelState model = init_model(spec, seed, 1e-3);
  Matrix x = random_matrix(4, spec.input_dim, rng::derive_key(seed, 77));
  Targets targets;
  if (task == TaskKind::Regression) {
    targets.values = random_matrix(4, spec.output_dim, rng::derive_key(seed, 78));
  } else {
    rng::CounterRng gen(rng::derive_key(seed, 79));
    targets.labels.resize(4);
    for (auto& l : targets.labels)
      l = static_cast<int>(gen.uniform(0, static_cast<double>(spec.output_dim)));
  }

  ForwardCache cache = forward(model, order, x);
  Gradients analytic = backward(model, cache, targets);
  std::vector<double> flat = flatten_gradients(analytic);

  auto loss_fn = [&]() {
    ForwardCache c = forward(model, order, x);
    return loss_value(model, c.predictions, targets);
  };
  std::vector<double> fd = finite_difference_gradient(model, loss_fn);

  REQUIRE(flat.size() == fd.size());
  REQUIRE(flat.size() <= 200);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double rel = std::abs(flat[i] - fd[i]) / std::max(std::abs(flat[i]) + std::abs(fd[i]), 1e-6);
    CHECK(rel <= 1e-4);
  }
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences, standard order") {
  check_gradients_fd(small_spec(), {1, 2, 3, 4}, TaskKind::Regression, 1001);
}

TEST_CASE("analytic gradients match central finite differences, swapped order") {
  check_gradients_fd(small_spec(), {2, 1, 4, 3}, TaskKind::Regression, 2002);
}

TEST_CASE("analytic gradients match finite differences for classification") {
  ModelSpec spec = small_spec(3, 3, 4, 4, 4, 4);
  spec.task = TaskKind::Classification;
  check_gradients_fd(spec, {1, 2, 3, 4}, TaskKind::Classification, 3003);
}

TEST_CASE("adam: zero gradient at step 1 leaves weights and omega untouched") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 5, 1e-3);
  StageState& stage = model.stages[0];
  const ParameterVector before = stage.flat_weights();
  std::vector<double> zeros(stage.param_count(), 0.0);
  adam_step(stage, zeros, stage.lr);
  const ParameterVector after = stage.flat_weights();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i]);
  CHECK(stage.omega == 0.0);
  CHECK(stage.opt.step == 1);
}

TEST_CASE("adam: first unit-gradient step moves a weight by about -lr") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 5, 1e-3);
  StageState& stage = model.stages[0];
  const ParameterVector before = stage.flat_weights();
  std::vector<double> grads(stage.param_count(), 0.0);
  grads[0] = 1.0;
  adam_step(stage, grads, 1e-3);
  const ParameterVector after = stage.flat_weights();
  // Bias correction cancels at step 1: delta = -lr * g/(|g| + eps).
  CHECK(after[0] - before[0] == doctest::Approx(-1e-3).epsilon(1e-6));
  for (std::size_t i = 1; i < before.size(); ++i) CHECK(after[i] == before[i]);
  CHECK(stage.omega == doctest::Approx(1.0));
}

TEST_CASE("adam: repeated identical gradients follow the scalar reference trace") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 6, 1e-3);
  StageState& stage = model.stages[1];
  std::vector<double> grads(stage.param_count(), 0.7);
  const double w0 = stage.flat_weights()[3];

  double w_ref = w0, m_ref = 0.0, v_ref = 0.0;
  for (long step = 1; step <= 4; ++step) {
    adam_step(stage, grads, 2e-3);
    m_ref = 0.9 * m_ref + 0.1 * 0.7;
    v_ref = 0.999 * v_ref + 0.001 * 0.49;
    const double mhat = m_ref / (1.0 - std::pow(0.9, static_cast<double>(step)));
    const double vhat = v_ref / (1.0 - std::pow(0.999, static_cast<double>(step)));
    w_ref -= 2e-3 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(stage.flat_weights()[3] == doctest::Approx(w_ref).epsilon(1e-12));
  }
  CHECK(stage.omega == doctest::Approx(0.49 * static_cast<double>(stage.param_count())));
}

TEST_CASE("adam rejects non-finite gradients") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 5, 1e-3);
  std::vector<double> grads(model.stages[0].param_count(), 0.0);
  grads[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(model.stages[0], grads, 1e-3), NumericDivergenceError);
}

TEST_CASE("grad_norm_sq sums squares across concatenated blocks") {
  CHECK(grad_norm_sq({}) == 0.0);
  CHECK(grad_norm_sq({0.0, 0.0, 0.0}) == 0.0);
  CHECK(grad_norm_sq({3.0, 4.0}) == 25.0);
  CHECK(grad_norm_sq({1.0, 1.0, 2.0}) == 6.0);  // blocks [1,1] and [2] concatenated
}

TEST_CASE("layer omission: full mask reproduces the plain forward loss") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 8, 1e-3);
  Matrix x = random_matrix(6, 3, 31);
  Targets targets;
  targets.values = random_matrix(6, 3, 32);
  ForwardCache cache = forward(model, standard_order(spec), x);
  const double plain = loss_value(model, cache.predictions, targets);
  CHECK(layer_omission_loss(model, {1, 1, 1, 1}, x, targets) == plain);
}

TEST_CASE("layer omission: omitting everything with identity edges is lossless on y=x") {
  ModelSpec spec = small_spec(4, 3, 4, 4, 4, 2);
  ModelState model = init_model(spec, 8, 1e-3);
  set_identity(model.edges.layers.embed, 4);
  set_identity(model.edges.layers.deembed, 4);
  Matrix x = random_matrix(5, 4, 33);
  Targets targets;
  targets.values = x;
  CHECK(layer_omission_loss(model, {0, 0, 0, 0}, x, targets) == 0.0);
}

TEST_CASE("layer omission matches the oracle with the layer deleted") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 9, 1e-3);
  Matrix x = random_matrix(5, 3, 34);
  Targets targets;
  targets.values = random_matrix(5, 3, 35);

  const double omitted = layer_omission_loss(model, {1, 1, 0, 1}, x, targets);
  Matrix expect = oracle_forward(model, {1, 2, 4}, x);  // layer 3 deleted
  CHECK(omitted == doctest::Approx(oracle_mse(expect, targets.values)).epsilon(1e-12));
  CHECK(std::isfinite(omitted));
}

TEST_CASE("partition choice does not change the initialized weights") {
  ModelSpec a = small_spec(3, 3, 4, 3, 8, 4);
  ModelSpec b = small_spec(3, 3, 4, 3, 8, 2);
  ModelState ma = init_model(a, 77, 1e-3);
  ModelState mb = init_model(b, 77, 1e-3);
  const std::vector<double> fa = ma.all_weights_flat();
  const std::vector<double> fb = mb.all_weights_flat();
  REQUIRE(fa.size() == fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);
}

TEST_CASE("stage flat weights round-trip bit-exactly") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 10, 1e-3);
  StageState& stage = model.stages[2];
  ParameterVector flat = stage.flat_weights();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += 0.25;
  stage.set_flat_weights(flat);
  const ParameterVector again = stage.flat_weights();
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(again[i] == flat[i]);
}

TEST_CASE("dimension mismatches are configuration errors") {
  ModelSpec spec = small_spec();
  ModelState model = init_model(spec, 11, 1e-3);
  Matrix bad = random_matrix(4, spec.input_dim + 1, 99);
  CHECK_THROWS_AS(forward(model, standard_order(spec), bad), ConfigError);
  CHECK_THROWS_AS(forward(model, {1, 2, 3}, random_matrix(4, 3, 98)), ConfigError);
  CHECK_THROWS_AS(forward(model, {1, 2, 2, 4}, random_matrix(4, 3, 97)), ConfigError);
}

TEST_CASE("non-finite activations raise numeric divergence with iteration context") {
  ModelSpec spec = small_spec(3, 3, 4, 3, 4, 4);
  ModelState model = init_model(spec, 12, 1e-3);
  model.edges.layers.embed[0] = std::numeric_limits<double>::infinity();
  Matrix x = random_matrix(2, 3, 96);
  try {
    forward(model, standard_order(spec), x, 41);
    FAIL("expected NumericDivergenceError");
  } catch (const NumericDivergenceError& e) {
    CHECK(e.iteration() == 41);
  }
}
