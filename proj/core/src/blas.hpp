// Internal sgemm wrapper; not installed.
#pragma once

#include <cblas.h>

namespace mmv::detail {

extern "C++" void pin_blas_threads();

// C[m,n] (beta*C +)= A[m,k] * B[k,n] with optional transposes, row-major.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);

}  // namespace mmv::detail
