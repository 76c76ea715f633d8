#pragma once

// Inner-loop arithmetic kernels. A portable scalar reference set is always
// available; an AVX2+FMA set is compiled in on x86-64 and selected at runtime
// when the CPU supports it. Every kernel computes each output element with an
// accumulation order that depends only on the reduction length, never on the
// number of rows, so results for a given row are independent of its neighbours.

#include <cstddef>
#include <string_view>

namespace taltpp::kernels {

struct KernelTable {
  const char* name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();

// The table every tensor op routes through. Chosen once on first use:
// AVX2 when available, unless TALTPP_KERNELS=scalar is set in the environment.
const KernelTable& active();

// Overrides the runtime choice ("scalar" or "avx2"); returns false if the
// requested table is unavailable.
bool select(std::string_view name);

}  // namespace taltpp::kernels
