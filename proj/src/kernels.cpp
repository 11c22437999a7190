#include "scribe/kernels.hpp"

#include <cstring>

namespace scribe::kernels {

namespace {
// Work threshold below which the OpenMP dispatch is skipped.
constexpr std::size_t kParallelFlops = 1u << 16;
}  // namespace

template <bool Acc>
static void nn_impl(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelFlops)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    real* crow = c + i * n;
    if (!Acc) std::memset(crow, 0, n * sizeof(real));
    const real* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const real ail = arow[l];
      const real* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
}

template <bool Acc>
static void nt_impl(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelFlops)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real s = dot(arow, b + j * k, k);
      if (Acc)
        crow[j] += s;
      else
        crow[j] = s;
    }
  }
}

template <bool Acc>
static void tn_impl(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) if (m * k * n > kParallelFlops)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    real* crow = c + i * n;
    if (!Acc) std::memset(crow, 0, n * sizeof(real));
    for (std::size_t l = 0; l < k; ++l) {
      const real ali = a[l * m + i];
      const real* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ali * brow[j];
    }
  }
}

void matmul_nn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  nn_impl<false>(a, b, c, m, k, n);
}
void matmul_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  nt_impl<false>(a, b, c, m, k, n);
}
void matmul_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  tn_impl<false>(a, b, c, m, k, n);
}
void matmul_nn_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  nn_impl<true>(a, b, c, m, k, n);
}
void matmul_nt_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  nt_impl<true>(a, b, c, m, k, n);
}
void matmul_tn_acc(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  tn_impl<true>(a, b, c, m, k, n);
}

void matmul_nn_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      real s = 0;
      for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
      c[i * n + j] = s;
    }
}

void matmul_nt_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      real s = 0;
      for (std::size_t l = 0; l < k; ++l) s += a[i * k + l] * b[j * k + l];
      c[i * n + j] = s;
    }
}

void matmul_tn_ref(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      real s = 0;
      for (std::size_t l = 0; l < k; ++l) s += a[l * m + i] * b[l * n + j];
      c[i * n + j] = s;
    }
}

real dot(const real* a, const real* b, std::size_t n) {
  real s = 0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(real alpha, const real* x, real* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace scribe::kernels
