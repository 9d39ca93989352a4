// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: independent oracle implementations (plain loops, no
// library kernels) and parameter plumbing for finite-difference checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ckfree/model.hpp"
#include "ckfree/rng.hpp"

namespace ckfree::testutil {

inline ModelSpec small_spec(std::size_t input = 3, std::size_t hidden = 3, std::size_t dim = 4,
                            std::size_t output = 3, std::size_t layers = 4, std::size_t stages = 4) {
  ModelSpec spec;
  spec.input_dim = input;
  spec.hidden_dim = hidden;
  spec.model_dim = dim;
  spec.output_dim = output;
  spec.num_layers = layers;
  spec.num_stages = stages;
  spec.finalize();
  return spec;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t key, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  rng::CounterRng gen(key);
  for (double& v : m.data) v = gen.uniform(lo, hi);
  return m;
}

inline double oracle_act(Activation act, double a) {
  switch (act) {
    case Activation::Tanh: return std::tanh(a);
    case Activation::Relu: return a > 0.0 ? a : 0.0;
    case Activation::Identity: return a;
  }
  return a;
}

/// Monolithic reference forward: applies the embedding, then the given layers
/// in sequence, then the de-embedding, all with plain loops.
inline Matrix oracle_forward(const ModelState& model, const std::vector<std::size_t>& layer_sequence,
                             const Matrix& x) {
  const ModelSpec& spec = model.spec;
  const std::size_t b = x.rows;
  Matrix h(b, spec.model_dim);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < spec.model_dim; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < spec.input_dim; ++l)
        acc += x.at(i, l) * model.edges.layers.embed[l * spec.model_dim + j];
      h.at(i, j) = acc;
    }

  for (std::size_t layer : layer_sequence) {
    const int sid = spec.stage_of_layer(layer);
    const ResidualBlock& blk =
        model.stages[static_cast<std::size_t>(sid - 1)].blocks[layer - spec.stage_range(sid).first];
    Matrix next = h;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t q = 0; q < spec.hidden_dim; ++q) {
        double pre = 0.0;
        for (std::size_t j = 0; j < spec.model_dim; ++j)
          pre += h.at(i, j) * blk.w1[j * spec.hidden_dim + q];
        const double z = oracle_act(spec.activation, pre);
        for (std::size_t j = 0; j < spec.model_dim; ++j)
          next.at(i, j) += z * blk.w2[q * spec.model_dim + j];
      }
    }
    h = next;
  }

  Matrix out(b, spec.output_dim);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < spec.output_dim; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < spec.model_dim; ++l)
        acc += h.at(i, l) * model.edges.layers.deembed[l * spec.output_dim + j];
      out.at(i, j) = acc;
    }
  return out;
}

inline double oracle_mse(const Matrix& pred, const Matrix& target) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    total += d * d;
  }
  return total / static_cast<double>(pred.size());
}

inline double oracle_xent(const Matrix& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) denom += std::exp(logits.at(i, j) - mx);
    total += -(logits.at(i, static_cast<std::size_t>(labels[i])) - mx - std::log(denom));
  }
  return total / static_cast<double>(logits.rows);
}

/// Mutable pointers to every parameter, in the canonical gradient order:
/// embed, deembed, then each stage's blocks (w1 then w2).
inline std::vector<double*> param_pointers(ModelState& model) {
  std::vector<double*> out;
  for (std::size_t i = 0; i < model.edges.layers.embed.size(); ++i)
    out.push_back(model.edges.layers.embed.ptr() + i);
  for (std::size_t i = 0; i < model.edges.layers.deembed.size(); ++i)
    out.push_back(model.edges.layers.deembed.ptr() + i);
  for (auto& stage : model.stages)
    for (auto& blk : stage.blocks) {
      for (std::size_t i = 0; i < blk.w1.size(); ++i) out.push_back(blk.w1.ptr() + i);
      for (std::size_t i = 0; i < blk.w2.size(); ++i) out.push_back(blk.w2.ptr() + i);
    }
  return out;
}

/// Analytic gradients flattened in the same canonical order.
inline std::vector<double> flatten_gradients(const Gradients& g) {
  std::vector<double> out;
  out.insert(out.end(), g.embed.begin(), g.embed.end());
  out.insert(out.end(), g.deembed.begin(), g.deembed.end());
  for (const auto& s : g.stage) out.insert(out.end(), s.begin(), s.end());
  return out;
}

/// Central finite differences of `loss_of_model` over every parameter.
inline std::vector<double> finite_difference_gradient(ModelState& model,
                                                      const std::function<double()>& loss_of_model,
                                                      double step = 1e-5) {
  std::vector<double*> params = param_pointers(model);
  std::vector<double> fd(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + step;
    const double up = loss_of_model();
    *params[i] = saved - step;
    const double down = loss_of_model();
    *params[i] = saved;
    fd[i] = (up - down) / (2.0 * step);
  }
  return fd;
}

}  // namespace ckfree::testutil
