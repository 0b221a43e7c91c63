#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bctn::kernels {

// Worker cap: BCTN_THREADS wins over the OpenMP default. Resolved once.
inline int max_threads() {
  static int cached = [] {
    int n = 1;
#ifdef _OPENMP
    n = omp_get_max_threads();
#endif
    if (const char* env = std::getenv("BCTN_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) n = std::min(n, cap);
    }
    return n;
  }();
  return cached;
}

// Below this many scalar ops the fork/join overhead is not worth it.
inline constexpr long kParGrain = 1L << 16;

// ---------------------------------------------------------------------------
// Serial reference kernels. These are the ground truth: the parallel
// variants must produce bit-identical output (each output element keeps the
// same serial accumulation order, threads only split independent elements).
// ---------------------------------------------------------------------------
namespace serial {

// C[m x n] (+)= op(A) * op(B) with op = transpose when the flag is set.
// A is m x k logically (stored k x m when ta), B is k x n (n x k when tb).
template <typename Real>
void matmul(const Real* a, bool ta, const Real* b, bool tb, Real* c, int m, int k, int n,
            bool accumulate) {
  for (int i = 0; i < m; ++i) {
    Real* crow = c + static_cast<long>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    for (int p = 0; p < k; ++p) {
      const Real av = ta ? a[static_cast<long>(p) * m + i] : a[static_cast<long>(i) * k + p];
      if (av == Real(0)) continue;
      if (!tb) {
        const Real* brow = b + static_cast<long>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<long>(j) * k + p];
      }
    }
  }
}

template <typename Real>
void vadd(const Real* a, const Real* b, Real* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename Real>
void vsub(const Real* a, const Real* b, Real* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename Real>
void vmul(const Real* a, const Real* b, Real* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename Real>
void vrelu(const Real* x, Real* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
}

template <typename Real>
void vsigmoid(const Real* x, Real* y, long n) {
  for (long i = 0; i < n; ++i) y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
}

// Row-wise stabilized softmax.
template <typename Real>
void softmax_rows(const Real* x, Real* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const Real* xr = x + static_cast<long>(r) * cols;
    Real* yr = y + static_cast<long>(r) * cols;
    Real mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    Real sum = Real(0);
    for (int j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const Real inv = Real(1) / sum;
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels: same element-level arithmetic, rows split across threads.
// ---------------------------------------------------------------------------
namespace par {

template <typename Real>
void matmul(const Real* a, bool ta, const Real* b, bool tb, Real* c, int m, int k, int n,
            bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    Real* crow = c + static_cast<long>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, Real(0));
    for (int p = 0; p < k; ++p) {
      const Real av = ta ? a[static_cast<long>(p) * m + i] : a[static_cast<long>(i) * k + p];
      if (av == Real(0)) continue;
      if (!tb) {
        const Real* brow = b + static_cast<long>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (int j = 0; j < n; ++j) crow[j] += av * b[static_cast<long>(j) * k + p];
      }
    }
  }
}

template <typename Real>
void vadd(const Real* a, const Real* b, Real* y, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <typename Real>
void vsub(const Real* a, const Real* b, Real* y, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

template <typename Real>
void vmul(const Real* a, const Real* b, Real* y, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <typename Real>
void vrelu(const Real* x, Real* y, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = x[i] > Real(0) ? x[i] : Real(0);
}

template <typename Real>
void vsigmoid(const Real* x, Real* y, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) y[i] = Real(1) / (Real(1) + std::exp(-x[i]));
}

template <typename Real>
void softmax_rows(const Real* x, Real* y, int rows, int cols) {
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r)
    serial::softmax_rows(x + static_cast<long>(r) * cols, y + static_cast<long>(r) * cols, 1,
                         cols);
}

}  // namespace par

// ---------------------------------------------------------------------------
// Dispatchers: go parallel only when the work amortizes thread startup.
// ---------------------------------------------------------------------------

template <typename Real>
void matmul(const Real* a, bool ta, const Real* b, bool tb, Real* c, int m, int k, int n,
            bool accumulate = false) {
  const long work = static_cast<long>(m) * k * n;
  if (work >= kParGrain && max_threads() > 1 && m > 1)
    par::matmul(a, ta, b, tb, c, m, k, n, accumulate);
  else
    serial::matmul(a, ta, b, tb, c, m, k, n, accumulate);
}

template <typename Real>
void vadd(const Real* a, const Real* b, Real* y, long n) {
  if (n >= kParGrain && max_threads() > 1)
    par::vadd(a, b, y, n);
  else
    serial::vadd(a, b, y, n);
}

template <typename Real>
void vsub(const Real* a, const Real* b, Real* y, long n) {
  if (n >= kParGrain && max_threads() > 1)
    par::vsub(a, b, y, n);
  else
    serial::vsub(a, b, y, n);
}

template <typename Real>
void vmul(const Real* a, const Real* b, Real* y, long n) {
  if (n >= kParGrain && max_threads() > 1)
    par::vmul(a, b, y, n);
  else
    serial::vmul(a, b, y, n);
}

template <typename Real>
void vrelu(const Real* x, Real* y, long n) {
  if (n >= kParGrain && max_threads() > 1)
    par::vrelu(x, y, n);
  else
    serial::vrelu(x, y, n);
}

template <typename Real>
void vsigmoid(const Real* x, Real* y, long n) {
  if (n >= kParGrain && max_threads() > 1)
    par::vsigmoid(x, y, n);
  else
    serial::vsigmoid(x, y, n);
}

template <typename Real>
void softmax_rows(const Real* x, Real* y, int rows, int cols) {
  if (static_cast<long>(rows) * cols >= kParGrain && max_threads() > 1 && rows > 1)
    par::softmax_rows(x, y, rows, cols);
  else
    serial::softmax_rows(x, y, rows, cols);
}

}  // namespace bctn::kernels
