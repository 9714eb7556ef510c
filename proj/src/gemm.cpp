#include "pelfa/nn/gemm.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pelfa::nn {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using Stride = Eigen::OuterStride<>;
using MatMapS =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0, Stride>;
using CMatMapS =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Stride>;

int num_threads() {
#ifdef _OPENMP
    return std::max(1, omp_get_max_threads());
#else
    return 1;
#endif
}

// Splits the N (column) dimension of the result across threads. Each column
// block is a self-contained Eigen product, deterministic regardless of
// scheduling.
template <typename Fn>
void for_each_col_block(int n, Fn&& fn) {
    const int threads = std::min(num_threads(), std::max(1, n / 16));
    if (threads <= 1) {
        fn(0, n);
        return;
    }
    const int chunk = (n + threads - 1) / threads;
#pragma omp parallel for schedule(static)
    for (int t = 0; t < threads; ++t) {
        const int c0 = t * chunk;
        const int c1 = std::min(n, c0 + chunk);
        if (c0 < c1) fn(c0, c1 - c0);
    }
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    CMatMap am(a, m, k);
    for_each_col_block(n, [&](int c0, int cols) {
        CMatMapS bm(b + c0, k, cols, Stride(n));
        MatMapS cm(c + c0, m, cols, Stride(n));
        if (accumulate)
            cm.noalias() += am * bm;
        else
            cm.noalias() = am * bm;
    });
}

void matmul_bt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    CMatMap am(a, m, k);
    for_each_col_block(n, [&](int c0, int cols) {
        CMatMapS bm(b + static_cast<std::size_t>(c0) * k, cols, k, Stride(k));
        MatMapS cm(c + c0, m, cols, Stride(n));
        if (accumulate)
            cm.noalias() += am * bm.transpose();
        else
            cm.noalias() = am * bm.transpose();
    });
}

void matmul_at(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    CMatMap am(a, k, m);
    for_each_col_block(n, [&](int c0, int cols) {
        CMatMapS bm(b + c0, k, cols, Stride(n));
        MatMapS cm(c + c0, m, cols, Stride(n));
        if (accumulate)
            cm.noalias() += am.transpose() * bm;
        else
            cm.noalias() = am.transpose() * bm;
    });
}

}  // namespace pelfa::nn
