// SPDX-License-Identifier: Apache-2.0

#include "ckfree/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ckfree/errors.hpp"
#include "ckfree/rng.hpp"

namespace ckfree {

namespace {

void check_finite_matrix(const Matrix& m, const char* what, long iteration) {
  for (double v : m.data)
    if (!std::isfinite(v)) throw NumericDivergenceError(std::string(what) + ": non-finite activation", iteration);
}

// Stable tensor tags for seeding: structure changes must not shift other tensors' streams.
constexpr std::uint64_t kTagEmbed = 0;
constexpr std::uint64_t kTagDeembed = 1;
constexpr std::uint64_t tag_w1(std::size_t layer) { return 2 * layer; }      // layer is 1-based
constexpr std::uint64_t tag_w2(std::size_t layer) { return 2 * layer + 1; }

ParameterVector sample_uniform(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                               rng::CounterRng rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  ParameterVector p = ParameterVector::zeros(std::move(shape));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(-a, a);
  return p;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "' (expected tanh|relu|identity)");
}

TaskKind parse_task(const std::string& name) {
  if (name == "regression") return TaskKind::Regression;
  if (name == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task '" + name + "' (expected regression|classification)");
}

const char* to_string(Activation act) {
  switch (act) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

const char* to_string(TaskKind task) {
  return task == TaskKind::Regression ? "regression" : "classification";
}

std::vector<LayerRange> ModelSpec::even_partition(std::size_t layers, std::size_t stages) {
  std::vector<LayerRange> out;
  out.reserve(stages);
  std::size_t next = 1;
  for (std::size_t i = 0; i < stages; ++i) {
    std::size_t count = layers / stages + (i < layers % stages ? 1 : 0);
    out.push_back({next, next + count - 1});
    next += count;
  }
  return out;
}

void ModelSpec::finalize() {
  if (partition.empty()) partition = even_partition(num_layers, num_stages);
  validate();
}

void ModelSpec::validate() const {
  if (input_dim == 0 || hidden_dim == 0 || model_dim == 0 || output_dim == 0 || num_layers == 0)
    throw ConfigError("model dimensions and layer count must be positive");
  // num_stages == 1 is the monolithic degenerate, kept for reference oracles.
  if (num_stages < 1 || num_stages > num_layers)
    throw ConfigError("num_stages must lie in [1, num_layers]");
  if (partition.size() != num_stages)
    throw ConfigError("partition must contain exactly num_stages ranges");
  std::size_t expect = 1;
  for (const auto& r : partition) {
    if (r.first != expect || r.last < r.first || r.last > num_layers)
      throw ConfigError("partition ranges must be contiguous, ordered and cover [1, num_layers]");
    expect = r.last + 1;
  }
  if (expect != num_layers + 1) throw ConfigError("partition does not cover all layers");
  if (task == TaskKind::Classification && output_dim < 2)
    throw ConfigError("classification requires output_dim >= 2");
}

bool ModelSpec::uniform_partition() const {
  for (const auto& r : partition)
    if (r.count() != partition.front().count()) return false;
  return true;
}

int ModelSpec::stage_of_layer(std::size_t layer) const {
  for (std::size_t i = 0; i < partition.size(); ++i)
    if (layer >= partition[i].first && layer <= partition[i].last) return static_cast<int>(i + 1);
  throw ConfigError("layer index out of range");
}

std::size_t StageState::param_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.param_count();
  return n;
}

ParameterVector StageState::flat_weights() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& b : blocks) {
    flat.insert(flat.end(), b.w1.values().begin(), b.w1.values().end());
    flat.insert(flat.end(), b.w2.values().begin(), b.w2.values().end());
  }
  return ParameterVector(std::move(flat), {param_count()});
}

void StageState::set_flat_weights(const ParameterVector& flat) {
  if (flat.size() != param_count())
    throw ConfigError("flat weight size does not match stage parameter count");
  std::size_t off = 0;
  for (auto& b : blocks) {
    std::memcpy(b.w1.ptr(), flat.ptr() + off, b.w1.size() * sizeof(double));
    off += b.w1.size();
    std::memcpy(b.w2.ptr(), flat.ptr() + off, b.w2.size() * sizeof(double));
    off += b.w2.size();
  }
}

std::size_t ModelState::param_count() const {
  std::size_t n = edges.layers.embed.size() + edges.layers.deembed.size();
  for (const auto& s : stages) n += s.param_count();
  return n;
}

std::vector<double> ModelState::all_weights_flat() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), edges.layers.embed.values().begin(), edges.layers.embed.values().end());
  flat.insert(flat.end(), edges.layers.deembed.values().begin(), edges.layers.deembed.values().end());
  for (const auto& s : stages) {
    for (const auto& b : s.blocks) {
      flat.insert(flat.end(), b.w1.values().begin(), b.w1.values().end());
      flat.insert(flat.end(), b.w2.values().begin(), b.w2.values().end());
    }
  }
  return flat;
}

std::vector<ResidualBlock> init_stage_blocks(const ModelSpec& spec, int stage_id, std::uint64_t seed) {
  const LayerRange& range = spec.stage_range(stage_id);
  std::vector<ResidualBlock> blocks;
  blocks.reserve(range.count());
  for (std::size_t layer = range.first; layer <= range.last; ++layer) {
    ResidualBlock b;
    b.w1 = sample_uniform({spec.model_dim, spec.hidden_dim}, spec.model_dim, spec.hidden_dim,
                          rng::CounterRng(rng::derive_key(seed, tag_w1(layer))));
    b.w2 = sample_uniform({spec.hidden_dim, spec.model_dim}, spec.hidden_dim, spec.model_dim,
                          rng::CounterRng(rng::derive_key(seed, tag_w2(layer))));
    blocks.push_back(std::move(b));
  }
  return blocks;
}

ModelState init_model(const ModelSpec& spec, std::uint64_t seed, double base_lr) {
  spec.validate();
  ModelState model;
  model.spec = spec;
  model.edges.layers.embed =
      sample_uniform({spec.input_dim, spec.model_dim}, spec.input_dim, spec.model_dim,
                     rng::CounterRng(rng::derive_key(seed, kTagEmbed)));
  model.edges.layers.deembed =
      sample_uniform({spec.model_dim, spec.output_dim}, spec.model_dim, spec.output_dim,
                     rng::CounterRng(rng::derive_key(seed, kTagDeembed)));
  model.edges.opt_embed.reset(model.edges.layers.embed.size());
  model.edges.opt_deembed.reset(model.edges.layers.deembed.size());
  model.edges.lr = base_lr;
  model.stages.resize(spec.num_stages);
  for (std::size_t i = 0; i < spec.num_stages; ++i) {
    StageState& s = model.stages[i];
    s.stage_id = static_cast<int>(i + 1);
    s.blocks = init_stage_blocks(spec, s.stage_id, seed);
    s.opt.reset(s.param_count());
    s.omega = 0.0;
    s.lr = base_lr;
  }
  return model;
}

namespace {

void validate_order(const ModelSpec& spec, const std::vector<int>& order) {
  if (order.size() != spec.num_stages) throw ConfigError("stage order length must equal num_stages");
  std::vector<bool> seen(spec.num_stages, false);
  for (int sid : order) {
    if (sid < 1 || static_cast<std::size_t>(sid) > spec.num_stages || seen[static_cast<std::size_t>(sid - 1)])
      throw ConfigError("stage order must be a permutation of [1..num_stages]");
    seen[static_cast<std::size_t>(sid - 1)] = true;
  }
}

ForwardCache forward_impl(const ModelState& model, const std::vector<int>& stage_order,
                          const Matrix& batch, const std::vector<int>* layer_mask, long iteration) {
  const ModelSpec& spec = model.spec;
  validate_order(spec, stage_order);
  if (batch.cols != spec.input_dim)
    throw ConfigError("batch column count " + std::to_string(batch.cols) + " does not match input_dim " +
                      std::to_string(spec.input_dim));
  if (layer_mask && layer_mask->size() != spec.num_layers)
    throw ConfigError("layer mask length must equal num_layers");

  ForwardCache cache;
  cache.stage_order = stage_order;
  cache.input = batch;
  cache.iteration = iteration;

  const std::size_t b = batch.rows;
  cache.embedded = Matrix(b, spec.model_dim);
  kernels::gemm_nn(batch.ptr(), model.edges.layers.embed.ptr(), cache.embedded.ptr(), b, spec.input_dim,
                   spec.model_dim);

  Matrix h = cache.embedded;
  Matrix pre(b, spec.hidden_dim);
  for (int sid : stage_order) {
    const StageState& stage = model.stages[static_cast<std::size_t>(sid - 1)];
    const LayerRange& range = spec.stage_range(sid);
    for (std::size_t bi = 0; bi < stage.blocks.size(); ++bi) {
      if (layer_mask && (*layer_mask)[range.first + bi - 1] == 0) continue;
      const ResidualBlock& blk = stage.blocks[bi];
      BlockCache bc;
      bc.stage_id = sid;
      bc.block_index = bi;
      bc.input = h;
      kernels::gemm_nn(h.ptr(), blk.w1.ptr(), pre.ptr(), b, spec.model_dim, spec.hidden_dim);
      bc.hidden = Matrix(b, spec.hidden_dim);
      kernels::apply_activation(spec.activation, pre.ptr(), bc.hidden.ptr(), pre.size());
      kernels::gemm_nn_acc(bc.hidden.ptr(), blk.w2.ptr(), h.ptr(), b, spec.hidden_dim, spec.model_dim);
      cache.blocks.push_back(std::move(bc));
    }
  }

  cache.predictions = Matrix(b, spec.output_dim);
  kernels::gemm_nn(h.ptr(), model.edges.layers.deembed.ptr(), cache.predictions.ptr(), b, spec.model_dim,
                   spec.output_dim);
  check_finite_matrix(cache.predictions, "forward", iteration);
  cache.valid = true;
  return cache;
}

// dL/dpredictions plus the loss itself.
double prediction_grad(const ModelSpec& spec, const Matrix& predictions, const Targets& targets,
                       Matrix* dpred) {
  if (spec.task == TaskKind::Regression) {
    if (targets.values.rows != predictions.rows || targets.values.cols != predictions.cols)
      throw ConfigError("target matrix shape does not match predictions");
    return kernels::mse_loss_grad(predictions.ptr(), targets.values.ptr(), predictions.rows,
                                  predictions.cols, dpred ? dpred->ptr() : nullptr);
  }
  if (targets.labels.size() != predictions.rows)
    throw ConfigError("label count does not match batch size");
  for (int y : targets.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= predictions.cols)
      throw ConfigError("label out of range for output_dim");
  return kernels::softmax_xent_loss_grad(predictions.ptr(), targets.labels.data(), predictions.rows,
                                         predictions.cols, dpred ? dpred->ptr() : nullptr);
}

}  // namespace

ForwardCache forward(const ModelState& model, const std::vector<int>& stage_order, const Matrix& batch,
                     long iteration) {
  return forward_impl(model, stage_order, batch, nullptr, iteration);
}

ForwardCache forward_masked(const ModelState& model, const std::vector<int>& stage_order,
                            const Matrix& batch, const std::vector<int>& layer_mask, long iteration) {
  return forward_impl(model, stage_order, batch, &layer_mask, iteration);
}

Gradients Gradients::zeros_like(const ModelState& model) {
  Gradients g;
  g.stage.resize(model.spec.num_stages);
  for (std::size_t i = 0; i < model.stages.size(); ++i)
    g.stage[i].assign(model.stages[i].param_count(), 0.0);
  g.embed.assign(model.edges.layers.embed.size(), 0.0);
  g.deembed.assign(model.edges.layers.deembed.size(), 0.0);
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  for (std::size_t i = 0; i < stage.size(); ++i)
    kernels::add_inplace(stage[i].data(), other.stage[i].data(), stage[i].size());
  kernels::add_inplace(embed.data(), other.embed.data(), embed.size());
  kernels::add_inplace(deembed.data(), other.deembed.data(), deembed.size());
  loss += other.loss;
}

void Gradients::scale_all(double a) {
  for (auto& s : stage) kernels::scale(a, s.data(), s.size());
  kernels::scale(a, embed.data(), embed.size());
  kernels::scale(a, deembed.data(), deembed.size());
  loss *= a;
}

Gradients backward(const ModelState& model, const ForwardCache& cache, const Targets& targets) {
  if (!cache.valid) throw UsageError("backward called without a matching forward cache");
  const ModelSpec& spec = model.spec;
  const std::size_t b = cache.input.rows;

  Gradients grads = Gradients::zeros_like(model);

  Matrix dpred(b, spec.output_dim);
  grads.loss = prediction_grad(spec, cache.predictions, targets, &dpred);

  // De-embedding: predictions = h_final * E_inv. h_final is the last block
  // output; recompute it from the final block cache (input + hidden * W2) or
  // from the embedding when no block ran.
  Matrix h_final;
  if (cache.blocks.empty()) {
    h_final = cache.embedded;
  } else {
    const BlockCache& last = cache.blocks.back();
    const ResidualBlock& blk =
        model.stages[static_cast<std::size_t>(last.stage_id - 1)].blocks[last.block_index];
    h_final = last.input;
    kernels::gemm_nn_acc(last.hidden.ptr(), blk.w2.ptr(), h_final.ptr(), b, spec.hidden_dim,
                         spec.model_dim);
  }
  kernels::gemm_tn_acc(h_final.ptr(), dpred.ptr(), grads.deembed.data(), spec.model_dim, b,
                       spec.output_dim);

  Matrix dh(b, spec.model_dim);
  kernels::gemm_nt_acc(dpred.ptr(), model.edges.layers.deembed.ptr(), dh.ptr(), b, spec.output_dim,
                       spec.model_dim);

  // Walk blocks in reverse application order.
  Matrix dz(b, spec.hidden_dim);
  Matrix da(b, spec.hidden_dim);
  for (std::size_t k = cache.blocks.size(); k-- > 0;) {
    const BlockCache& bc = cache.blocks[k];
    const StageState& stage = model.stages[static_cast<std::size_t>(bc.stage_id - 1)];
    const ResidualBlock& blk = stage.blocks[bc.block_index];

    std::fill(dz.data.begin(), dz.data.end(), 0.0);
    kernels::gemm_nt_acc(dh.ptr(), blk.w2.ptr(), dz.ptr(), b, spec.model_dim, spec.hidden_dim);
    kernels::activation_backward(spec.activation, bc.hidden.ptr(), dz.ptr(), da.ptr(), da.size());

    // Gradient offsets inside the stage's flat layout: blocks in order, w1 then w2.
    std::size_t off = 0;
    for (std::size_t i = 0; i < bc.block_index; ++i)
      off += stage.blocks[i].param_count();
    double* gw1 = grads.stage[static_cast<std::size_t>(bc.stage_id - 1)].data() + off;
    double* gw2 = gw1 + blk.w1.size();

    kernels::gemm_tn_acc(bc.input.ptr(), da.ptr(), gw1, spec.model_dim, b, spec.hidden_dim);
    kernels::gemm_tn_acc(bc.hidden.ptr(), dh.ptr(), gw2, spec.hidden_dim, b, spec.model_dim);

    // dh_in = dh (residual path) + da * W1^T
    kernels::gemm_nt_acc(da.ptr(), blk.w1.ptr(), dh.ptr(), b, spec.hidden_dim, spec.model_dim);
  }

  kernels::gemm_tn_acc(cache.input.ptr(), dh.ptr(), grads.embed.data(), spec.input_dim, b,
                       spec.model_dim);

  for (const auto& sg : grads.stage)
    for (double v : sg)
      if (!std::isfinite(v)) throw NumericDivergenceError("backward: non-finite gradient", cache.iteration);
  return grads;
}

double loss_value(const ModelState& model, const Matrix& predictions, const Targets& targets) {
  return prediction_grad(model.spec, predictions, targets, nullptr);
}

void adam_step(StageState& stage, const std::vector<double>& grads, double lr) {
  if (grads.size() != stage.param_count())
    throw ConfigError("gradient size does not match stage parameter count");
  if (lr <= 0.0) throw ConfigError("learning rate must be positive");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericDivergenceError("adam_step: non-finite gradient");

  ParameterVector w = stage.flat_weights();
  ++stage.opt.step;
  kernels::adam_update(w.ptr(), stage.opt.m.data(), stage.opt.v.data(), grads.data(), w.size(), lr,
                       kAdamBeta1, kAdamBeta2, kAdamEps, stage.opt.step);
  stage.set_flat_weights(w);
  stage.omega = grad_norm_sq(grads);
}

void adam_step_edges(EdgeState& edges, const std::vector<double>& g_embed,
                     const std::vector<double>& g_deembed) {
  ++edges.opt_embed.step;
  kernels::adam_update(edges.layers.embed.ptr(), edges.opt_embed.m.data(), edges.opt_embed.v.data(),
                       g_embed.data(), g_embed.size(), edges.lr, kAdamBeta1, kAdamBeta2, kAdamEps,
                       edges.opt_embed.step);
  ++edges.opt_deembed.step;
  kernels::adam_update(edges.layers.deembed.ptr(), edges.opt_deembed.m.data(),
                       edges.opt_deembed.v.data(), g_deembed.data(), g_deembed.size(), edges.lr,
                       kAdamBeta1, kAdamBeta2, kAdamEps, edges.opt_deembed.step);
}

double grad_norm_sq(const std::vector<double>& grads) {
  return kernels::sum_squares(grads.data(), grads.size());
}

double layer_omission_loss(const ModelState& model, const std::vector<int>& layer_mask,
                           const Matrix& batch, const Targets& targets) {
  std::vector<int> order(model.spec.num_stages);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i + 1);
  ForwardCache cache = forward_masked(model, order, batch, layer_mask);
  return loss_value(model, cache.predictions, targets);
}

}  // namespace ckfree
