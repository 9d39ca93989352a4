// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace ckfree::kernels {

enum class Backend { Serial, Parallel };

/// Backend used by the dispatching wrappers. Defaults to Parallel when built
/// with OpenMP, Serial otherwise. Both backends partition work by output
/// element and keep a fixed inner accumulation order, so results are
/// bit-identical regardless of backend or thread count.
Backend active_backend();
void set_backend(Backend b);
bool parallel_available();
int parallel_threads();

enum class Activation { Tanh, Relu, Identity };

// Reductions accumulate per fixed-size block, then fold blocks in index
// order. Both backends share this constant so their sums match bitwise.
inline constexpr std::size_t kReductionBlock = 1024;

// clang-format off
#define CKFREE_KERNEL_DECLS                                                                               \
  /* C = A*B; A m-by-k, B k-by-n, C m-by-n, all row-major */                                              \
  void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n); \
  /* C += A*B */                                                                                          \
  void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,             \
                   std::size_t n);                                                                        \
  /* C += A*B^T; A m-by-k, B n-by-k */                                                                    \
  void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,             \
                   std::size_t n);                                                                        \
  /* C += A^T*B; A k-by-m, B k-by-n */                                                                    \
  void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,             \
                   std::size_t n);                                                                        \
  void add_inplace(double* x, const double* y, std::size_t n);                                            \
  void axpy(double alpha, const double* x, double* y, std::size_t n);                                     \
  void scale(double alpha, double* x, std::size_t n);                                                     \
  void apply_activation(Activation act, const double* a, double* z, std::size_t n);                       \
  /* da = dz * act'(z), derivative reconstructed from the activation output */                            \
  void activation_backward(Activation act, const double* z, const double* dz, double* da,                 \
                           std::size_t n);                                                                \
  double sum_squares(const double* x, std::size_t n);                                                     \
  double sum_squared_diff(const double* x, const double* y, std::size_t n);                               \
  /* one Adam update; step is the post-increment step count (>= 1) */                                     \
  void adam_update(double* w, double* m, double* v, const double* g, std::size_t n, double lr,            \
                   double beta1, double beta2, double eps, long step);                                     \
  /* mean squared error over rows*cols; writes dL/dpred when dpred != nullptr */                          \
  double mse_loss_grad(const double* pred, const double* target, std::size_t rows, std::size_t cols,      \
                       double* dpred);                                                                    \
  /* mean softmax cross-entropy over rows; writes dL/dlogits when dlogits != nullptr */                   \
  double softmax_xent_loss_grad(const double* logits, const int* labels, std::size_t rows,                \
                                std::size_t cols, double* dlogits);
// clang-format on

// Reference implementation.
namespace serial {
CKFREE_KERNEL_DECLS
}

// OpenMP implementation (plain loops when built without OpenMP).
namespace par {
CKFREE_KERNEL_DECLS
}

// Dispatching wrappers honoring active_backend().
CKFREE_KERNEL_DECLS

#undef CKFREE_KERNEL_DECLS

}  // namespace ckfree::kernels
