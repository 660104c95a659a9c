// Times the serial and OpenMP kernel paths on the shapes the models actually
// use and prints a small table. The two paths must agree bitwise; this tool
// verifies that on the fly while measuring.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "rmbl/kernels.hpp"
#include "rmbl/layers.hpp"
#include "rmbl/rng.hpp"
#include "rmbl/tensor.hpp"

using namespace rmbl;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(int reps, const std::function<void()>& fn) {
  fn();  // warm up
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(std::size_t n, RngStream& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void bench_matmul(int m, int k, int n, int reps) {
  RngStream rng(1);
  auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
  std::vector<double> cs(static_cast<std::size_t>(m) * n), cp(cs.size());

  const double serial =
      time_ms(reps, [&]() { kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n); });
  const double parallel =
      time_ms(reps, [&]() { kernels::matmul_parallel(a.data(), b.data(), cp.data(), m, k, n); });
  const bool same = cs == cp;
  std::printf("matmul %4dx%4dx%4d  serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  bitwise %s\n",
              m, k, n, serial, parallel, serial / parallel, same ? "ok" : "MISMATCH");
}

void bench_attention(int batch, int t, int d, int heads, int reps) {
  RngStream rng(2);
  Tensor q = Tensor::from(random_vec(static_cast<std::size_t>(batch) * t * d, rng), {batch * t, d});
  Tensor k = Tensor::from(random_vec(static_cast<std::size_t>(batch) * t * d, rng), {batch * t, d});
  Tensor v = Tensor::from(random_vec(static_cast<std::size_t>(batch) * t * d, rng), {batch * t, d});

  kernels::set_parallel(false);
  std::vector<double> out_serial;
  const double serial = time_ms(reps, [&]() {
    out_serial = attention(q, k, v, batch, t, t, heads, true).values();
  });
  kernels::set_parallel(true);
  std::vector<double> out_parallel;
  const double parallel = time_ms(reps, [&]() {
    out_parallel = attention(q, k, v, batch, t, t, heads, true).values();
  });
  const bool same = out_serial == out_parallel;
  std::printf("attn   b%-3d t%-3d d%-4d serial %8.3f ms  omp %8.3f ms  speedup %5.2fx  bitwise %s\n",
              batch, t, d, serial, parallel, serial / parallel, same ? "ok" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 20;
  if (argc > 1) reps = std::atoi(argv[1]);

  std::printf("threads available: %d\n", kernels::threads() > 0 ? kernels::threads() : -1);

  kernels::set_parallel(true);
  bench_matmul(64, 80, 64, reps);
  bench_matmul(256, 256, 256, reps);
  bench_matmul(32, 256, 6144, reps);
  bench_matmul(512, 128, 512, reps);
  bench_attention(16, 8, 128, 4, reps);
  bench_attention(4, 64, 64, 4, reps);
  kernels::set_parallel(true);
  return 0;
}
