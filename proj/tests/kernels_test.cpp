#include <doctest.h>

#include <vector>

#include "oracles.hpp"
#include "rmbl/kernels.hpp"
#include "rmbl/rng.hpp"

using namespace rmbl;

namespace {
std::vector<double> random_vec(std::size_t n, RngStream& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}
}  // namespace

TEST_CASE("matmul matches the naive oracle") {
  RngStream rng(11);
  const int m = 17, k = 23, n = 9;
  auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
  auto expect = oracles::naive_matmul(a, b, m, k, n);

  std::vector<double> c(static_cast<std::size_t>(m) * n);
  kernels::matmul_serial(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are bitwise identical to serial") {
  RngStream rng(7);
  const int m = 33, k = 31, n = 29;
  auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec(static_cast<std::size_t>(k) * n, rng);

  std::vector<double> cs(static_cast<std::size_t>(m) * n), cp(cs.size());
  kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n);
  kernels::matmul_parallel(a.data(), b.data(), cp.data(), m, k, n);
  CHECK(cs == cp);

  auto at = random_vec(static_cast<std::size_t>(k) * m, rng);
  kernels::matmul_tn_serial(at.data(), b.data(), cs.data(), m, k, n);
  kernels::matmul_tn_parallel(at.data(), b.data(), cp.data(), m, k, n);
  CHECK(cs == cp);

  auto bt = random_vec(static_cast<std::size_t>(n) * k, rng);
  kernels::matmul_nt_serial(a.data(), bt.data(), cs.data(), m, k, n);
  kernels::matmul_nt_parallel(a.data(), bt.data(), cp.data(), m, k, n);
  CHECK(cs == cp);
}

TEST_CASE("transpose variants agree with explicit transposition") {
  RngStream rng(3);
  const int m = 5, k = 7, n = 4;
  auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
  auto b = random_vec(static_cast<std::size_t>(k) * n, rng);

  // A^T stored [k,m]; matmul_tn(A^T, B) must equal A*B.
  std::vector<double> at(static_cast<std::size_t>(k) * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < k; ++j) {
      at[static_cast<std::size_t>(j) * m + i] = a[static_cast<std::size_t>(i) * k + j];
    }
  }
  auto expect = oracles::naive_matmul(a, b, m, k, n);
  std::vector<double> c(static_cast<std::size_t>(m) * n);
  kernels::matmul_tn(at.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  // B^T stored [n,k]; matmul_nt(A, B^T) must equal A*B.
  std::vector<double> bt(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) {
      bt[static_cast<std::size_t>(j) * k + i] = b[static_cast<std::size_t>(i) * n + j];
    }
  }
  kernels::matmul_nt(a.data(), bt.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("sum reduces in serial order regardless of the parallel switch") {
  RngStream rng(5);
  auto v = random_vec(10001, rng);
  kernels::set_parallel(false);
  const double s1 = kernels::sum(v.data(), v.size());
  kernels::set_parallel(true);
  const double s2 = kernels::sum(v.data(), v.size());
  CHECK(s1 == s2);
}
