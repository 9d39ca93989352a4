// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Kept deliberately plain: the OpenMP variants in
// kernels_omp.cpp must reproduce these bit-for-bit, and the unit tests compare
// the two backends on random inputs.

#include <cmath>

#include "ckfree/kernels.hpp"

namespace ckfree::kernels::serial {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * k + l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
}

void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = a[i * k + l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
      crow[j] += acc;
    }
  }
}

void add_inplace(double* x, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] += y[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void apply_activation(Activation act, const double* a, double* z, std::size_t n) {
  switch (act) {
    case Activation::Tanh:
      for (std::size_t i = 0; i < n; ++i) z[i] = std::tanh(a[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) z[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    case Activation::Identity:
      for (std::size_t i = 0; i < n; ++i) z[i] = a[i];
      break;
  }
}

void activation_backward(Activation act, const double* z, const double* dz, double* da,
                         std::size_t n) {
  switch (act) {
    case Activation::Tanh:
      for (std::size_t i = 0; i < n; ++i) da[i] = dz[i] * (1.0 - z[i] * z[i]);
      break;
    case Activation::Relu:
      for (std::size_t i = 0; i < n; ++i) da[i] = z[i] > 0.0 ? dz[i] : 0.0;
      break;
    case Activation::Identity:
      for (std::size_t i = 0; i < n; ++i) da[i] = dz[i];
      break;
  }
}

double sum_squares(const double* x, std::size_t n) {
  const std::size_t nblocks = (n + kReductionBlock - 1) / kReductionBlock;
  double total = 0.0;
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t hi = lo + kReductionBlock < n ? lo + kReductionBlock : n;
    double part = 0.0;
    for (std::size_t i = lo; i < hi; ++i) part += x[i] * x[i];
    total += part;
  }
  return total;
}

double sum_squared_diff(const double* x, const double* y, std::size_t n) {
  const std::size_t nblocks = (n + kReductionBlock - 1) / kReductionBlock;
  double total = 0.0;
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t lo = blk * kReductionBlock;
    const std::size_t hi = lo + kReductionBlock < n ? lo + kReductionBlock : n;
    double part = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = x[i] - y[i];
      part += d * d;
    }
    total += part;
  }
  return total;
}

void adam_update(double* w, double* m, double* v, const double* g, std::size_t n, double lr,
                 double beta1, double beta2, double eps, long step) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double mse_loss_grad(const double* pred, const double* target, std::size_t rows, std::size_t cols,
                     double* dpred) {
  const double inv = 1.0 / static_cast<double>(rows * cols);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double part = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t idx = i * cols + j;
      const double d = pred[idx] - target[idx];
      part += d * d;
      if (dpred) dpred[idx] = 2.0 * d * inv;
    }
    total += part;
  }
  return total * inv;
}

double softmax_xent_loss_grad(const double* logits, const int* labels, std::size_t rows,
                              std::size_t cols, double* dlogits) {
  const double invb = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* lrow = logits + i * cols;
    double mx = lrow[0];
    for (std::size_t j = 1; j < cols; ++j)
      if (lrow[j] > mx) mx = lrow[j];
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) denom += std::exp(lrow[j] - mx);
    const int y = labels[i];
    total += -(lrow[y] - mx - std::log(denom));
    if (dlogits) {
      double* drow = dlogits + i * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const double p = std::exp(lrow[j] - mx) / denom;
        drow[j] = (p - (static_cast<int>(j) == y ? 1.0 : 0.0)) * invb;
      }
    }
  }
  return total * invb;
}

}  // namespace ckfree::kernels::serial
