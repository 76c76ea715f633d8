#include "taltpp/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define TALTPP_HAVE_AVX2_KERNELS 1
#include <immintrin.h>

#include <cmath>
#endif

namespace taltpp::kernels {

#if TALTPP_HAVE_AVX2_KERNELS
namespace {

#define TALTPP_AVX2 __attribute__((target("avx2,fma")))

TALTPP_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

TALTPP_AVX2 double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

TALTPP_AVX2 void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

// C row tile of 16 columns kept in registers across the whole reduction.
// a_at(p) yields the scalar multiplier for reduction step p.
template <class AAt>
TALTPP_AVX2 inline void row_tile_update(AAt a_at, const double* b, std::size_t ldb, double* crow, std::size_t k,
                                        std::size_t n) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    __m256d c1 = _mm256_loadu_pd(crow + j + 4);
    __m256d c2 = _mm256_loadu_pd(crow + j + 8);
    __m256d c3 = _mm256_loadu_pd(crow + j + 12);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d va = _mm256_set1_pd(a_at(p));
      const double* brow = b + p * ldb + j;
      c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow), c0);
      c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 4), c1);
      c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 8), c2);
      c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + 12), c3);
    }
    _mm256_storeu_pd(crow + j, c0);
    _mm256_storeu_pd(crow + j + 4, c1);
    _mm256_storeu_pd(crow + j + 8, c2);
    _mm256_storeu_pd(crow + j + 12, c3);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(crow + j);
    for (std::size_t p = 0; p < k; ++p) c0 = _mm256_fmadd_pd(_mm256_set1_pd(a_at(p)), _mm256_loadu_pd(b + p * ldb + j), c0);
    _mm256_storeu_pd(crow + j, c0);
  }
  for (; j < n; ++j) {
    double c = crow[j];
    for (std::size_t p = 0; p < k; ++p) c = std::fma(a_at(p), b[p * ldb + j], c);
    crow[j] = c;
  }
}

TALTPP_AVX2 void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    row_tile_update([arow](std::size_t p) { return arow[p]; }, b, n, c + i * n, k, n);
  }
}

TALTPP_AVX2 void gemm_nt_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot_avx2(arow, b + j * k, k);
  }
}

TALTPP_AVX2 void gemm_tn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* acol = a + i;
    row_tile_update([acol, m](std::size_t p) { return acol[p * m]; }, b, n, c + i * n, k, n);
  }
}

#undef TALTPP_AVX2

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{"avx2", dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace taltpp::kernels
