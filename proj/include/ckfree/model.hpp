// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckfree/kernels.hpp"
#include "ckfree/matrix.hpp"
#include "ckfree/param_vector.hpp"

namespace ckfree {

using kernels::Activation;

enum class TaskKind { Regression, Classification };

Activation parse_activation(const std::string& name);
TaskKind parse_task(const std::string& name);
const char* to_string(Activation act);
const char* to_string(TaskKind task);

/// Contiguous 1-based inclusive layer range served by one stage.
struct LayerRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const { return last - first + 1; }
};

/// Architecture description: embedding -> L residual blocks -> de-embedding,
/// with the blocks partitioned over contiguous stages.
struct ModelSpec {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t model_dim = 32;
  std::size_t output_dim = 16;  // 16-way classification uses 16; regression mirrors input_dim
  std::size_t num_layers = 8;
  std::size_t num_stages = 4;
  std::vector<LayerRange> partition;  // filled by finalize() when empty
  Activation activation = Activation::Tanh;
  TaskKind task = TaskKind::Regression;

  static std::vector<LayerRange> even_partition(std::size_t layers, std::size_t stages);

  /// Fills defaults (partition) and validates; call once after construction.
  void finalize();
  void validate() const;

  bool uniform_partition() const;
  /// Stage id (1-based) serving the given 1-based layer.
  int stage_of_layer(std::size_t layer) const;
  const LayerRange& stage_range(int stage_id) const { return partition[static_cast<std::size_t>(stage_id - 1)]; }
};

/// One residual unit: x + act(x*W1)*W2.
struct ResidualBlock {
  ParameterVector w1;  // model_dim x hidden_dim
  ParameterVector w2;  // hidden_dim x model_dim
  std::size_t param_count() const { return w1.size() + w2.size(); }
};

struct AdamState {
  std::vector<double> m, v;
  long step = 0;
  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Weights, optimizer state and the last squared gradient norm of one stage.
struct StageState {
  int stage_id = 0;
  std::vector<ResidualBlock> blocks;
  AdamState opt;     // over the flattened stage parameters
  double omega = 0.0;
  double lr = 3e-4;

  std::size_t param_count() const;
  ParameterVector flat_weights() const;
  void set_flat_weights(const ParameterVector& flat);
};

struct EdgeLayers {
  ParameterVector embed;    // input_dim x model_dim
  ParameterVector deembed;  // model_dim x output_dim
};

struct EdgeState {
  EdgeLayers layers;
  AdamState opt_embed, opt_deembed;
  double lr = 3e-4;
};

/// Complete trainable state of the staged model.
struct ModelState {
  ModelSpec spec;
  EdgeState edges;
  std::vector<StageState> stages;

  std::size_t param_count() const;
  /// Edges then stages in stage order; concatenation is bit-stable.
  std::vector<double> all_weights_flat() const;
};

/// Uniform init in [-a, a], a = sqrt(6/(fan_in+fan_out)), streams keyed per tensor.
ModelState init_model(const ModelSpec& spec, std::uint64_t seed, double base_lr);
/// Fresh weights for one stage using the same scheme (used by random reinitialization).
std::vector<ResidualBlock> init_stage_blocks(const ModelSpec& spec, int stage_id, std::uint64_t seed);

/// Regression targets or classification labels for one batch.
struct Targets {
  Matrix values;            // regression: rows x output_dim
  std::vector<int> labels;  // classification: one label per row
};

struct BlockCache {
  int stage_id = 0;
  std::size_t block_index = 0;  // index within the stage
  Matrix input;                 // activations entering the block
  Matrix hidden;                // act(input*W1)
};

/// Activations recorded by forward() for the matching backward().
struct ForwardCache {
  std::vector<int> stage_order;
  Matrix input;
  Matrix embedded;
  std::vector<BlockCache> blocks;  // in application order
  Matrix predictions;
  long iteration = -1;
  bool valid = false;
};

/// Runs the composite embed -> stages (in the given order) -> de-embed.
/// stage_order must be a permutation of [1..s].
ForwardCache forward(const ModelState& model, const std::vector<int>& stage_order, const Matrix& batch,
                     long iteration = -1);

/// forward() with per-layer omission: layer_mask[l-1] == 0 replaces block l by
/// the identity (residual skip only). Mask length must equal num_layers.
ForwardCache forward_masked(const ModelState& model, const std::vector<int>& stage_order,
                            const Matrix& batch, const std::vector<int>& layer_mask,
                            long iteration = -1);

/// Per-stage flattened gradients plus edge gradients and the batch loss.
struct Gradients {
  std::vector<std::vector<double>> stage;  // indexed by stage_id-1
  std::vector<double> embed, deembed;
  double loss = 0.0;

  static Gradients zeros_like(const ModelState& model);
  void accumulate(const Gradients& other);
  void scale_all(double a);
};

Gradients backward(const ModelState& model, const ForwardCache& cache, const Targets& targets);

/// Loss of already-computed predictions against targets (no gradients).
double loss_value(const ModelState& model, const Matrix& predictions, const Targets& targets);

/// One Adam step on a stage; increments the step counter and sets
/// omega = ||grads||^2. Betas (0.9, 0.999), eps 1e-8, no weight decay.
void adam_step(StageState& stage, const std::vector<double>& grads, double lr);
void adam_step_edges(EdgeState& edges, const std::vector<double>& g_embed,
                     const std::vector<double>& g_deembed);

double grad_norm_sq(const std::vector<double>& grads);

/// Loss of the model with masked-out layers replaced by identity.
double layer_omission_loss(const ModelState& model, const std::vector<int>& layer_mask,
                           const Matrix& batch, const Targets& targets);

}  // namespace ckfree
