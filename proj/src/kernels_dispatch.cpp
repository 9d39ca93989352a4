// SPDX-License-Identifier: Apache-2.0

#include "ckfree/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ckfree::kernels {

namespace {
Backend g_backend = parallel_available() ? Backend::Parallel : Backend::Serial;
}

bool parallel_available() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int parallel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
  g_backend = (b == Backend::Parallel && !parallel_available()) ? Backend::Serial : b;
}

#define CKFREE_DISPATCH(call) \
  if (g_backend == Backend::Parallel) return par::call; \
  return serial::call

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  CKFREE_DISPATCH(gemm_nn(a, b, c, m, k, n));
}
void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  CKFREE_DISPATCH(gemm_nn_acc(a, b, c, m, k, n));
}
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  CKFREE_DISPATCH(gemm_nt_acc(a, b, c, m, k, n));
}
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  CKFREE_DISPATCH(gemm_tn_acc(a, b, c, m, k, n));
}
void add_inplace(double* x, const double* y, std::size_t n) { CKFREE_DISPATCH(add_inplace(x, y, n)); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  CKFREE_DISPATCH(axpy(alpha, x, y, n));
}
void scale(double alpha, double* x, std::size_t n) { CKFREE_DISPATCH(scale(alpha, x, n)); }
void apply_activation(Activation act, const double* a, double* z, std::size_t n) {
  CKFREE_DISPATCH(apply_activation(act, a, z, n));
}
void activation_backward(Activation act, const double* z, const double* dz, double* da,
                         std::size_t n) {
  CKFREE_DISPATCH(activation_backward(act, z, dz, da, n));
}
double sum_squares(const double* x, std::size_t n) { CKFREE_DISPATCH(sum_squares(x, n)); }
double sum_squared_diff(const double* x, const double* y, std::size_t n) {
  CKFREE_DISPATCH(sum_squared_diff(x, y, n));
}
void adam_update(double* w, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, long step) {
  CKFREE_DISPATCH(adam_update(w, m, v, g, n, lr, beta1, beta2, eps, step));
}
double mse_loss_grad(const double* pred, const double* target, std::size_t rows, std::size_t cols,
                     double* dpred) {
  CKFREE_DISPATCH(mse_loss_grad(pred, target, rows, cols, dpred));
}
double softmax_xent_loss_grad(const double* logits, const int* labels, std::size_t rows,
                              std::size_t cols, double* dlogits) {
  CKFREE_DISPATCH(softmax_xent_loss_grad(logits, labels, rows, cols, dlogits));
}

#undef CKFREE_DISPATCH

}  // namespace ckfree::kernels
