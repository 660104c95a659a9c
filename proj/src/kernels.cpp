#include "rmbl/kernels.hpp"

#include <atomic>
#include <cmath>

#ifdef RMBL_HAVE_OPENMP
#include <omp.h>
#endif

namespace rmbl::kernels {

namespace {
std::atomic<bool> g_parallel{true};
std::atomic<int> g_threads{0};

inline void gemm_row(const double* a_row, const double* b, double* c_row, int k, int n,
                     bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < n; ++j) {
      c_row[j] = 0.0;
    }
  }
  for (int kk = 0; kk < k; ++kk) {
    const double a_ik = a_row[kk];
    if (a_ik == 0.0) {
      continue;
    }
    const double* b_row = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
    for (int j = 0; j < n; ++j) {
      c_row[j] += a_ik * b_row[j];
    }
  }
}

// Row i of A^T B is a_col i; gather the strided column first.
inline void gemm_tn_row(const double* a, const double* b, double* c_row, int i, int m, int k,
                        int n, bool accumulate) {
  if (!accumulate) {
    for (int j = 0; j < n; ++j) {
      c_row[j] = 0.0;
    }
  }
  for (int kk = 0; kk < k; ++kk) {
    const double a_ki = a[static_cast<std::size_t>(kk) * m + i];
    if (a_ki == 0.0) {
      continue;
    }
    const double* b_row = b + static_cast<std::size_t>(kk) * n;
#pragma omp simd
    for (int j = 0; j < n; ++j) {
      c_row[j] += a_ki * b_row[j];
    }
  }
}

inline void gemm_nt_row(const double* a_row, const double* b, double* c_row, int k, int n,
                        bool accumulate) {
  for (int j = 0; j < n; ++j) {
    const double* b_row = b + static_cast<std::size_t>(j) * k;
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (int kk = 0; kk < k; ++kk) {
      s += a_row[kk] * b_row[kk];
    }
    c_row[j] = accumulate ? c_row[j] + s : s;
  }
}

template <typename RowFn>
void run_rows(int m, bool par, RowFn&& fn) {
#ifdef RMBL_HAVE_OPENMP
  if (par && m > 1) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
      fn(i);
    }
    return;
  }
#endif
  for (int i = 0; i < m; ++i) {
    fn(i);
  }
}
}  // namespace

void set_parallel(bool on) { g_parallel.store(on); }
bool parallel_enabled() { return g_parallel.load(); }

void set_threads(int n) {
  g_threads.store(n);
#ifdef RMBL_HAVE_OPENMP
  if (n > 0) {
    omp_set_num_threads(n);
  }
#endif
}
int threads() { return g_threads.load(); }

void matmul_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, false, [&](int i) {
    gemm_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
             false);
  });
}
void matmul_parallel(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, true, [&](int i) {
    gemm_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
             false);
  });
}
void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
             false);
  });
}
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
             true);
  });
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, false, [&](int i) {
    gemm_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, false);
  });
}
void matmul_tn_parallel(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, true, [&](int i) {
    gemm_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, false);
  });
}
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, false);
  });
}
void matmul_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_tn_row(a, b, c + static_cast<std::size_t>(i) * n, i, m, k, n, true);
  });
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, false, [&](int i) {
    gemm_nt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
                false);
  });
}
void matmul_nt_parallel(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, true, [&](int i) {
    gemm_nt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
                false);
  });
}
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_nt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
                false);
  });
}
void matmul_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  run_rows(m, parallel_enabled(), [&](int i) {
    gemm_nt_row(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, k, n,
                true);
  });
}

void acc(const double* x, double* y, std::size_t n) {
  parallel_for(static_cast<std::int64_t>(n), [&](std::int64_t i) { y[i] += x[i]; });
}

double sum(const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += x[i];
  }
  return s;
}

bool has_nan(const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(x[i])) {
      return true;
    }
  }
  return false;
}

}  // namespace rmbl::kernels
