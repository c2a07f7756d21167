// Dense compute kernels. Each kernel has a serial reference implementation
// and an OpenMP row-parallel variant; both compute every output element with
// the same serial inner loop, so results are bit-identical for any thread
// count. The serial versions stay exported for tests and benchmarks.
#pragma once

#include <cstdint>
#include <functional>

namespace sa::kernels {

// Global worker count, default 1. Values <= 1 run everything serially.
void set_threads(int n);
int threads();

enum class Trans { N, T };

// C = op(A) * op(B) with op per flag, all matrices row-major.
// op(A) is m x k, op(B) is k x n, C is m x n. accumulate adds into C.
void gemm_serial(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k,
                 const double* a, const double* b, double* c, bool accumulate);

// Row-parallel version; honors the explicit thread count.
void gemm_omp(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k,
              const double* a, const double* b, double* c, bool accumulate, int nthreads);

// Dispatches to gemm_omp when the global thread count > 1.
void gemm(Trans ta, Trans tb, int64_t m, int64_t n, int64_t k,
          const double* a, const double* b, double* c, bool accumulate = false);

// Runs fn(i) for i in [0, n). Parallel over i when the global thread count
// allows; iterations must be independent.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace sa::kernels
