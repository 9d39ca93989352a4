// SPDX-License-Identifier: Apache-2.0
//
// Serial vs OpenMP kernel timings. Also double-checks that both backends
// produce identical bits on the benchmark inputs.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "ckfree/kernels.hpp"
#include "ckfree/rng.hpp"

namespace {

using ckfree::kernels::Activation;
namespace kser = ckfree::kernels::serial;
namespace kpar = ckfree::kernels::par;

std::vector<double> random_vec(std::size_t n, std::uint64_t key) {
  ckfree::rng::CounterRng gen(key);
  std::vector<double> v(n);
  for (double& x : v) x = gen.uniform(-1.0, 1.0);
  return v;
}

template <typename F>
double time_ms(F&& fn, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void bench_gemm(std::size_t m, std::size_t k, std::size_t n, int reps) {
  const auto a = random_vec(m * k, 1);
  const auto b = random_vec(k * n, 2);
  std::vector<double> c_ser(m * n), c_par(m * n);
  const double ts = time_ms([&] { kser::gemm_nn(a.data(), b.data(), c_ser.data(), m, k, n); }, reps);
  const double tp = time_ms([&] { kpar::gemm_nn(a.data(), b.data(), c_par.data(), m, k, n); }, reps);
  std::printf("gemm_nn %4zux%4zux%4zu  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  %s\n", m, k, n,
              ts, tp, ts / tp, bits_equal(c_ser, c_par) ? "bit-equal" : "MISMATCH");
}

void bench_sum_squares(std::size_t n, int reps) {
  const auto x = random_vec(n, 3);
  double r_ser = 0, r_par = 0;
  const double ts = time_ms([&] { r_ser = kser::sum_squares(x.data(), n); }, reps);
  const double tp = time_ms([&] { r_par = kpar::sum_squares(x.data(), n); }, reps);
  std::printf("sum_squares n=%9zu  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  %s\n", n, ts, tp,
              ts / tp, r_ser == r_par ? "bit-equal" : "MISMATCH");
}

void bench_adam(std::size_t n, int reps) {
  auto w_ser = random_vec(n, 4);
  auto w_par = w_ser;
  std::vector<double> m_ser(n, 0.0), v_ser(n, 0.0), m_par(n, 0.0), v_par(n, 0.0);
  const auto g = random_vec(n, 5);
  const double ts = time_ms(
      [&] { kser::adam_update(w_ser.data(), m_ser.data(), v_ser.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 1); },
      reps);
  const double tp = time_ms(
      [&] { kpar::adam_update(w_par.data(), m_par.data(), v_par.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 1); },
      reps);
  std::printf("adam_update n=%9zu  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  %s\n", n, ts, tp,
              ts / tp, bits_equal(w_ser, w_par) ? "bit-equal" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("OpenMP threads: %d\n\n", ckfree::kernels::parallel_threads());
  bench_gemm(64, 32, 64, 200);
  bench_gemm(256, 256, 256, 20);
  bench_gemm(512, 512, 512, 5);
  bench_sum_squares(1 << 16, 500);
  bench_sum_squares(1 << 22, 20);
  bench_adam(1 << 16, 500);
  bench_adam(1 << 22, 20);
  return 0;
}
