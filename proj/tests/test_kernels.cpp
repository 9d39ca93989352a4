// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "ckfree/kernels.hpp"
#include "ckfree/rng.hpp"

using namespace ckfree;
namespace kser = kernels::serial;
namespace kpar = kernels::par;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t key, double lo = -2.0, double hi = 2.0) {
  rng::CounterRng gen(key);
  std::vector<double> v(n);
  for (double& x : v) x = gen.uniform(lo, hi);
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial and parallel backends are bit-identical on random shapes") {
  rng::CounterRng shapes(rng::derive_key(99, 1));
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(shapes.uniform(0, 40));
    const std::size_t k = 1 + static_cast<std::size_t>(shapes.uniform(0, 40));
    const std::size_t n = 1 + static_cast<std::size_t>(shapes.uniform(0, 40));
    const auto key = rng::derive_key(7, static_cast<std::uint64_t>(trial));
    const auto a = random_vec(m * k, key);
    const auto b = random_vec(k * n, key + 1);
    const auto bt = random_vec(n * k, key + 2);
    const auto at = random_vec(k * m, key + 3);
    const auto seed_c = random_vec(m * n, key + 4);

    std::vector<double> c1 = seed_c, c2 = seed_c;
    kser::gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
    kpar::gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));

    c1 = seed_c;
    c2 = seed_c;
    kser::gemm_nn_acc(a.data(), b.data(), c1.data(), m, k, n);
    kpar::gemm_nn_acc(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));

    c1 = seed_c;
    c2 = seed_c;
    kser::gemm_nt_acc(a.data(), bt.data(), c1.data(), m, k, n);
    kpar::gemm_nt_acc(a.data(), bt.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));

    c1 = seed_c;
    c2 = seed_c;
    kser::gemm_tn_acc(at.data(), b.data(), c1.data(), m, k, n);
    kpar::gemm_tn_acc(at.data(), b.data(), c2.data(), m, k, n);
    CHECK(bits_equal(c1, c2));
  }
}

TEST_CASE("reductions are bit-identical across backends at block boundaries") {
  using kernels::kReductionBlock;
  for (std::size_t n : {std::size_t(1), kReductionBlock - 1, kReductionBlock, kReductionBlock + 1,
                        3 * kReductionBlock + 17, std::size_t(100000)}) {
    const auto x = random_vec(n, rng::derive_key(5, n));
    const auto y = random_vec(n, rng::derive_key(6, n));
    CHECK(kser::sum_squares(x.data(), n) == kpar::sum_squares(x.data(), n));
    CHECK(kser::sum_squared_diff(x.data(), y.data(), n) == kpar::sum_squared_diff(x.data(), y.data(), n));
  }
}

TEST_CASE("elementwise kernels and losses are bit-identical across backends") {
  const std::size_t rows = 47, cols = 19;
  const auto pred = random_vec(rows * cols, 11);
  const auto target = random_vec(rows * cols, 12);
  std::vector<double> d1(rows * cols), d2(rows * cols);
  CHECK(kser::mse_loss_grad(pred.data(), target.data(), rows, cols, d1.data()) ==
        kpar::mse_loss_grad(pred.data(), target.data(), rows, cols, d2.data()));
  CHECK(bits_equal(d1, d2));

  std::vector<int> labels(rows);
  rng::CounterRng lab(13);
  for (auto& l : labels) l = static_cast<int>(lab.uniform(0, static_cast<double>(cols)));
  CHECK(kser::softmax_xent_loss_grad(pred.data(), labels.data(), rows, cols, d1.data()) ==
        kpar::softmax_xent_loss_grad(pred.data(), labels.data(), rows, cols, d2.data()));
  CHECK(bits_equal(d1, d2));

  const std::size_t n = 9001;
  auto z1 = random_vec(n, 14), z2 = z1;
  const auto g = random_vec(n, 15);
  kser::apply_activation(kernels::Activation::Tanh, g.data(), z1.data(), n);
  kpar::apply_activation(kernels::Activation::Tanh, g.data(), z2.data(), n);
  CHECK(bits_equal(z1, z2));

  auto w1 = random_vec(n, 16), w2 = w1;
  std::vector<double> m1(n, 0.1), v1(n, 0.2), m2 = m1, v2 = v1;
  kser::adam_update(w1.data(), m1.data(), v1.data(), g.data(), n, 3e-4, 0.9, 0.999, 1e-8, 5);
  kpar::adam_update(w2.data(), m2.data(), v2.data(), g.data(), n, 3e-4, 0.9, 0.999, 1e-8, 5);
  CHECK(bits_equal(w1, w2));
  CHECK(bits_equal(m1, m2));
  CHECK(bits_equal(v1, v2));
}

TEST_CASE("gemm_nn matches an independent dot-product oracle") {
  const std::size_t m = 9, k = 13, n = 7;
  const auto a = random_vec(m * k, 21);
  const auto b = random_vec(k * n, 22);
  std::vector<double> c(m * n);
  kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-13));
    }
}

TEST_CASE("adam_update matches the scalar recurrence") {
  double w = 0.5, m = 0.0, v = 0.0;
  double w_ref = 0.5, m_ref = 0.0, v_ref = 0.0;
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double g[] = {1.0, 1.0, -0.3};
  for (long step = 1; step <= 3; ++step) {
    kernels::adam_update(&w, &m, &v, &g[step - 1], 1, lr, b1, b2, eps, step);
    m_ref = b1 * m_ref + (1 - b1) * g[step - 1];
    v_ref = b2 * v_ref + (1 - b2) * g[step - 1] * g[step - 1];
    const double mhat = m_ref / (1 - std::pow(b1, static_cast<double>(step)));
    const double vhat = v_ref / (1 - std::pow(b2, static_cast<double>(step)));
    w_ref -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(w == doctest::Approx(w_ref).epsilon(1e-15));
  }
}

TEST_CASE("dispatch honors the selected backend") {
  const auto prev = kernels::active_backend();
  kernels::set_backend(kernels::Backend::Serial);
  CHECK(kernels::active_backend() == kernels::Backend::Serial);
  kernels::set_backend(kernels::Backend::Parallel);
  if (kernels::parallel_available())
    CHECK(kernels::active_backend() == kernels::Backend::Parallel);
  else
    CHECK(kernels::active_backend() == kernels::Backend::Serial);
  kernels::set_backend(prev);
}
