// SPDX-License-Identifier: Apache-2.0
#pragma once

// Raw dense kernels over row-major buffers. Two implementations share one
// signature set:
//   reference::  straightforward serial loops, kept as the testing oracle
//   parallel::   OpenMP-parallel, cache-friendly loop order
// Every output element of the parallel kernels is computed by exactly one
// thread with the same summation order regardless of the thread count, so
// results are reproducible across thread counts.
//
// All gemm variants accumulate: C += op(A) * op(B).

#include <cstddef>

namespace frnn::kernels {

namespace reference {
/// C(m x n) += A(m x k) * B(k x n)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
/// C(m x n) += A(k x m)^T * B(k x n)
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
/// C(m x n) += A(m x k) * B(n x k)^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void hadamard(std::size_t len, const double* a, const double* b, double* out);
void tanh_map(std::size_t len, const double* a, double* out);
void sigmoid_map(std::size_t len, const double* a, double* out);
}  // namespace reference

namespace parallel {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void hadamard(std::size_t len, const double* a, const double* b, double* out);
void tanh_map(std::size_t len, const double* a, double* out);
void sigmoid_map(std::size_t len, const double* a, double* out);
}  // namespace parallel

/// Numerically stable logistic function.
inline double sigmoid(double x) noexcept;

/// Number of OpenMP threads the parallel kernels will use.
int max_threads() noexcept;
void set_threads(int n) noexcept;

}  // namespace frnn::kernels

#include <cmath>

inline double frnn::kernels::sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
