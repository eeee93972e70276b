#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

namespace crossway {

// Row-major GEMM fronts over Eigen. A is [m,k], B is [k,n] (or transposed as
// named), C is [m,n]; all contiguous row-major.
template <class S>
using MatMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using CMatMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class S>
inline void gemm_nn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMatMap<S> a(A, m, k), b(B, k, n);
    MatMap<S> c(C, m, n);
    if (acc)
        c.noalias() += a * b;
    else
        c.noalias() = a * b;
}

// C = A * B^T, B is [n,k].
template <class S>
inline void gemm_nt(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMatMap<S> a(A, m, k), b(B, n, k);
    MatMap<S> c(C, m, n);
    if (acc)
        c.noalias() += a * b.transpose();
    else
        c.noalias() = a * b.transpose();
}

// C = A^T * B, A is [k,m].
template <class S>
inline void gemm_tn(const S* A, const S* B, S* C, int64_t m, int64_t k, int64_t n, bool acc) {
    CMatMap<S> a(A, k, m), b(B, k, n);
    MatMap<S> c(C, m, n);
    if (acc)
        c.noalias() += a.transpose() * b;
    else
        c.noalias() = a.transpose() * b;
}

}  // namespace crossway
