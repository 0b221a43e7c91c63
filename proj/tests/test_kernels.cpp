#include <doctest.h>

#include <cmath>
#include <vector>

#include "bctn/kernels.hpp"
#include "bctn/rng.hpp"

using namespace bctn;

namespace {

std::vector<float> random_vec(Rng& rng, long n, double lo = -2.0, double hi = 2.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("matmul matches independent triple-loop oracle") {
  Rng rng(42);
  const int m = 3, k = 4, n = 2;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<float> c(m * n);
  kernels::matmul(a.data(), false, b.data(), false, c.data(), m, k, n);

  // oracle: plain i/j/p triple loop in double
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0;
      for (int p = 0; p < k; ++p) acc += static_cast<double>(a[i * k + p]) * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("matmul transpose flags agree with explicit transposition") {
  Rng rng(7);
  const int m = 5, k = 3, n = 4;
  auto a = random_vec(rng, m * k);   // stored m x k
  auto at = std::vector<float>(k * m);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  auto b = random_vec(rng, k * n);
  auto bt = std::vector<float>(n * k);
  for (int p = 0; p < k; ++p)
    for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];

  std::vector<float> c0(m * n), c1(m * n), c2(m * n);
  kernels::matmul(a.data(), false, b.data(), false, c0.data(), m, k, n);
  kernels::matmul(at.data(), true, b.data(), false, c1.data(), m, k, n);
  kernels::matmul(a.data(), false, bt.data(), true, c2.data(), m, k, n);
  for (int i = 0; i < m * n; ++i) {
    CHECK(c0[i] == c1[i]);
    CHECK(c0[i] == c2[i]);
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(99);
  const int m = 37, k = 29, n = 31;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);
  std::vector<float> cs(m * n), cp(m * n);
  kernels::serial::matmul(a.data(), false, b.data(), false, cs.data(), m, k, n, false);
  kernels::par::matmul(a.data(), false, b.data(), false, cp.data(), m, k, n, false);
  CHECK(cs == cp);

  const long len = 1 << 12;
  auto x = random_vec(rng, len, -5.0, 5.0);
  auto y = random_vec(rng, len, -5.0, 5.0);
  std::vector<float> os(len), op(len);

  kernels::serial::vadd(x.data(), y.data(), os.data(), len);
  kernels::par::vadd(x.data(), y.data(), op.data(), len);
  CHECK(os == op);

  kernels::serial::vmul(x.data(), y.data(), os.data(), len);
  kernels::par::vmul(x.data(), y.data(), op.data(), len);
  CHECK(os == op);

  kernels::serial::vrelu(x.data(), os.data(), len);
  kernels::par::vrelu(x.data(), op.data(), len);
  CHECK(os == op);

  kernels::serial::vsigmoid(x.data(), os.data(), len);
  kernels::par::vsigmoid(x.data(), op.data(), len);
  CHECK(os == op);

  const int rows = 64, cols = 64;
  auto sm_in = random_vec(rng, rows * cols, -30.0, 30.0);
  std::vector<float> ss(rows * cols), sp(rows * cols);
  kernels::serial::softmax_rows(sm_in.data(), ss.data(), rows, cols);
  kernels::par::softmax_rows(sm_in.data(), sp.data(), rows, cols);
  CHECK(ss == sp);
}

TEST_CASE("matmul accumulate adds instead of overwriting") {
  const int m = 2, k = 2, n = 2;
  std::vector<float> a{1, 0, 0, 1};
  std::vector<float> b{1, 2, 3, 4};
  std::vector<float> c{10, 10, 10, 10};
  kernels::matmul(a.data(), false, b.data(), false, c.data(), m, k, n, true);
  CHECK(c == std::vector<float>{11, 12, 13, 14});
}
