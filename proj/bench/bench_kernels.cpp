// Times the OpenMP kernels against their serial reference implementations
// and verifies the results agree bitwise. Run: build/bench/uavsim_bench
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "uavsim/nn/conv.hpp"
#include "uavsim/nn/kernels.hpp"
#include "uavsim/nn/tensor.hpp"
#include "uavsim/rng.hpp"

namespace {

using uavsim::Rng;
using uavsim::nn::Tensor;

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         reps;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s %10.3f %10.3f %8.2fx   %s\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms,
              identical ? "identical" : "MISMATCH");
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n, Rng& rng) {
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> c_serial(m * n), c_par(m * n);
  const double ts = time_ms(
      [&] { uavsim::nn::matmul_serial(a.data(), b.data(), c_serial.data(), m,
                                      k, n); },
      3);
  const double tp = time_ms(
      [&] { uavsim::nn::matmul(a.data(), b.data(), c_par.data(), m, k, n); },
      3);
  char name[64];
  std::snprintf(name, sizeof(name), "matmul %zux%zux%zu", m, k, n);
  report(name, ts, tp, c_serial == c_par);
}

void bench_conv(std::size_t batch, std::size_t in_ch, std::size_t out_ch,
                std::size_t hw, Rng& rng) {
  uavsim::nn::Conv2dLayer layer(in_ch, out_ch, 3, true);
  layer.init_glorot(rng);
  Tensor x = Tensor::zeros({batch, in_ch, hw, hw});
  for (double& v : x.data) v = rng.uniform(-1.0, 1.0);
  Tensor y_serial, y_par;
  const double ts = time_ms(
      [&] {
        y_serial = uavsim::nn::conv2d_forward_serial(x, layer.weights,
                                                     layer.bias, true);
      },
      3);
  const double tp =
      time_ms([&] { y_par = layer.forward(x, false, nullptr); }, 3);
  char name[64];
  std::snprintf(name, sizeof(name), "conv3x3 b%zu %zu->%zu @%zu", batch,
                in_ch, out_ch, hw);
  report(name, ts, tp, y_serial.data == y_par.data);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled; comparing two serial runs\n");
#endif
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "openmp ms",
              "speedup");
  Rng rng(12345);
  bench_matmul(64, 256, 256, rng);
  bench_matmul(256, 256, 256, rng);
  bench_matmul(512, 512, 512, rng);
  bench_conv(32, 8, 16, 16, rng);
  bench_conv(64, 16, 32, 8, rng);
  return 0;
}
