#pragma once

#include <cstddef>
#include <cstdint>

// Dense numeric kernels behind the autodiff engine. Every kernel has a plain
// serial implementation and an OpenMP one. The parallel variants split work
// across *output* elements only, so each accumulator is still summed in the
// same order as the serial code and results are bitwise identical regardless
// of thread count. tests/kernels_test.cpp asserts that equivalence and
// tools/bench_kernels.cpp compares throughput.
namespace rmbl::kernels {

// Process-wide switch used by the dispatching entry points below.
void set_parallel(bool on);
bool parallel_enabled();

// Caps the OpenMP thread pool. 0 keeps the runtime default.
void set_threads(int n);
int threads();

// C[m,n] = A[m,k] * B[k,n], row-major.
void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n);
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// C[m,n] = A[k,m]^T * B[k,n]; used for weight gradients.
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);

// C[m,n] = A[m,k] * B[n,k]^T; used for input gradients.
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

// Accumulating variants (C += ...), same layouts as above.
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n);

// y[i] += x[i]
void acc(const double* x, double* y, std::size_t n);

// Serial-order reduction. Deterministic by construction.
double sum(const double* x, std::size_t n);

bool has_nan(const double* x, std::size_t n);

// Runs fn(i) for i in [0, n). Uses OpenMP when enabled and n is large enough
// to amortize the fork. fn must be safe to run concurrently for distinct i.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#ifdef RMBL_HAVE_OPENMP
  if (parallel_enabled() && n >= 256) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      fn(i);
    }
    return;
  }
#endif
  for (std::int64_t i = 0; i < n; ++i) {
    fn(i);
  }
}

}  // namespace rmbl::kernels
