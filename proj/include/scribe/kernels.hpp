#pragma once

#include <cstddef>

#include "scribe/tensor.hpp"

// Low-level numeric kernels. The optimized versions parallelize with OpenMP
// over independent output rows; within one output element the accumulation
// order is fixed, so results are bit-identical for any thread count. The
// *_ref versions are naive serial loops kept as test oracles and benchmark
// baselines.
namespace scribe::kernels {

// c(m,n) = a(m,k) * b(k,n)
void matmul_nn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
// c(m,n) = a(m,k) * b(n,k)^T
void matmul_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
// c(m,n) = a(k,m)^T * b(k,n)
void matmul_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);

// accumulating variants: c += product
void matmul_nn_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);

// serial reference implementations
void matmul_nn_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n);

real dot(const real* a, const real* b, std::size_t n);
// y += alpha * x
void axpy(real alpha, const real* x, real* y, std::size_t n);

}  // namespace scribe::kernels
