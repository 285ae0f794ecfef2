// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace frnn::kernels {

namespace {
// Below this many multiply-adds a kernel runs on the calling thread.
constexpr std::size_t kParallelThreshold = 1 << 15;
}  // namespace

int max_threads() noexcept { return omp_get_max_threads(); }
void set_threads(int n) noexcept { omp_set_num_threads(n > 0 ? n : 1); }

// ---------------------------------------------------------------------------
// reference

namespace reference {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c[i * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = acc;
    }
}

void hadamard(std::size_t len, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < len; ++i) out[i] = a[i] * b[i];
}

void tanh_map(std::size_t len, const double* a, double* out) {
  for (std::size_t i = 0; i < len; ++i) out[i] = std::tanh(a[i]);
}

void sigmoid_map(std::size_t len, const double* a, double* out) {
  for (std::size_t i = 0; i < len; ++i) out[i] = sigmoid(a[i]);
}

}  // namespace reference

// ---------------------------------------------------------------------------
// parallel

namespace parallel {

namespace {

// Column tile: four rows of a C tile stay in L1 while B streams by.
constexpr std::size_t kTile = 256;

// C[i0..i0+4)[j0..j1) += sum_p a(i, p) * B[p][j0..j1), p ascending. `a_at`
// abstracts the A layout so the nn and tn variants share one loop nest.
template <typename AAt>
inline void rows4(std::size_t i0, std::size_t j0, std::size_t j1, std::size_t n, std::size_t k, AAt a_at,
                  const double* b, double* c) {
  double* c0 = c + (i0 + 0) * n;
  double* c1 = c + (i0 + 1) * n;
  double* c2 = c + (i0 + 2) * n;
  double* c3 = c + (i0 + 3) * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    const double s0 = a_at(i0 + 0, p), s1 = a_at(i0 + 1, p), s2 = a_at(i0 + 2, p), s3 = a_at(i0 + 3, p);
#pragma omp simd
    for (std::size_t j = j0; j < j1; ++j) {
      const double bv = brow[j];
      c0[j] += s0 * bv;
      c1[j] += s1 * bv;
      c2[j] += s2 * bv;
      c3[j] += s3 * bv;
    }
  }
}

template <typename AAt>
inline void row1(std::size_t i, std::size_t j0, std::size_t j1, std::size_t n, std::size_t k, AAt a_at,
                 const double* b, double* c) {
  double* crow = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double s = a_at(i, p);
    const double* brow = b + p * n;
#pragma omp simd
    for (std::size_t j = j0; j < j1; ++j) crow[j] += s * brow[j];
  }
}

template <typename AAt>
void tiled_gemm(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const double* b, double* c) {
  const std::size_t row_blocks = (m + 3) / 4;
  const std::size_t col_tiles = (n + kTile - 1) / kTile;
  const std::size_t tasks = row_blocks * col_tiles;
  const bool par = m * n * k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t i0 = (t % row_blocks) * 4;
    const std::size_t j0 = (t / row_blocks) * kTile;
    const std::size_t j1 = std::min(n, j0 + kTile);
    if (i0 + 4 <= m) {
      rows4(i0, j0, j1, n, k, a_at, b, c);
    } else {
      for (std::size_t i = i0; i < m; ++i) row1(i, j0, j1, n, k, a_at, b, c);
    }
  }
}

// c(i..i+1, j..j+1) += rows i, i+1 of A dotted with rows j, j+1 of B.
inline void dot2x2(const double* a0, const double* a1, const double* b0, const double* b1, std::size_t len,
                   double* c00, double* c01, double* c10, double* c11) {
  double s00 = 0.0, s01 = 0.0, s10 = 0.0, s11 = 0.0;
#pragma omp simd reduction(+ : s00, s01, s10, s11)
  for (std::size_t p = 0; p < len; ++p) {
    s00 += a0[p] * b0[p];
    s01 += a0[p] * b1[p];
    s10 += a1[p] * b0[p];
    s11 += a1[p] * b1[p];
  }
  *c00 += s00;
  *c01 += s01;
  *c10 += s10;
  *c11 += s11;
}

inline double dot(const double* x, const double* y, std::size_t len) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t p = 0; p < len; ++p) acc += x[p] * y[p];
  return acc;
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  tiled_gemm(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  tiled_gemm(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  // Rows of A and B are both contiguous along k: dot products, two rows of
  // each at a time. Odd edges fall back to single dot products.
  const std::size_t mb = m / 2;
  const bool par = m * n * k >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::size_t ib = 0; ib < (m + 1) / 2; ++ib) {
    const std::size_t i = ib * 2;
    const double* a0 = a + i * k;
    if (ib < mb) {
      const double* a1 = a0 + k;
      std::size_t j = 0;
      for (; j + 1 < n; j += 2)
        dot2x2(a0, a1, b + j * k, b + (j + 1) * k, k, &c[i * n + j], &c[i * n + j + 1], &c[(i + 1) * n + j],
               &c[(i + 1) * n + j + 1]);
      if (j < n) {
        c[i * n + j] += dot(a0, b + j * k, k);
        c[(i + 1) * n + j] += dot(a1, b + j * k, k);
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a0, b + j * k, k);
    }
  }
}

void hadamard(std::size_t len, const double* a, const double* b, double* out) {
#pragma omp parallel for simd schedule(static) if (len >= kParallelThreshold)
  for (std::size_t i = 0; i < len; ++i) out[i] = a[i] * b[i];
}

}  // namespace parallel
}  // namespace frnn::kernels
