#pragma once

#include <algorithm>

namespace pelfa::nn {

// C = A * B with row-major buffers, C is M x N, A is M x K, B is K x N.
// accumulate=true adds into C instead of overwriting.
// Work is split over output columns; every output element is accumulated by a
// single thread in fixed k order, so results are bitwise reproducible.
void matmul(const double* a, const double* b, double* c, int m, int k, int n,
            bool accumulate = false);

// C = A * B^T, C is M x N, A is M x K, B is N x K.
void matmul_bt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);

// C = A^T * B, C is M x N, A is K x M, B is K x N.
void matmul_at(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);

}  // namespace pelfa::nn
