#include "sa/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sa::kernels {

namespace {
int g_threads = 1;

inline double dot_row(Trans ta, Trans tb, int64_t m_stride_a, int64_t n_stride_b, int64_t k,
                      const double* a, const double* b, int64_t i, int64_t j) {
  // a element (i, p): row-major A is m x k when N (stride k), k x m when T.
  // b element (p, j): row-major B is k x n when N (stride n), n x k when T.
  double acc = 0.0;
  if (ta == Trans::N && tb == Trans::N) {
    const double* ar = a + i * m_stride_a;
    for (int64_t p = 0; p < k; ++p) acc += ar[p] * b[p * n_stride_b + j];
  } else if (ta == Trans::N && tb == Trans::T) {
    const double* ar = a + i * m_stride_a;
    const double* br = b + j * n_stride_b;
    for (int64_t p = 0; p < k; ++p) acc += ar[p] * br[p];
  } else if (ta == Trans::T && tb == Trans::N) {
    for (int64_t p = 0; p < k; ++p) acc += a[p * m_stride_a + i] * b[p * n_stride_b + j];
  } else {
    const double* br = b + j * n_stride_b;
    for (int64_t p = 0; p < k; ++p) acc += a[p * m_stride_a + i] * br[p];
  }
  return acc;
}

}  // namespace

void set_threads(int n) { g_threads = n < 1 ? 1 : n; }
int threads() { return g_threads; }

void gemm_serial(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
  const int64_t stride_a = (ta == Trans::N) ? k : m;  // row length of stored A
  const int64_t stride_b = (tb == Trans::N) ? n : k;  // row length of stored B
  for (int64_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      double v = dot_row(ta, tb, stride_a, stride_b, k, a, b, i, j);
      cr[j] = accumulate ? cr[j] + v : v;
    }
  }
}

void gemm_omp(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, const double* a, const double* b,
              double* c, bool accumulate, int nthreads) {
  const int64_t stride_a = (ta == Trans::N) ? k : m;
  const int64_t stride_b = (tb == Trans::N) ? n : k;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
  for (int64_t i = 0; i < m; ++i) {
    double* cr = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      double v = dot_row(ta, tb, stride_a, stride_b, k, a, b, i, j);
      cr[j] = accumulate ? cr[j] + v : v;
    }
  }
#ifndef _OPENMP
  (void)nthreads;
#endif
}

void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (g_threads > 1 && m > 1)
    gemm_omp(ta, tb, m, n, k, a, b, c, accumulate, g_threads);
  else
    gemm_serial(ta, tb, m, n, k, a, b, c, accumulate);
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
#ifdef _OPENMP
  if (g_threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace sa::kernels
