// SPDX-License-Identifier: Apache-2.0
// Transcendental maps of the parallel kernel set. This file is built with
// -ffast-math so the loops below call the vector exp/tanh of libmvec; results
// are within a few ulp of the scalar reference.
#include <cmath>

#include "fusionrnn/kernels.hpp"

namespace frnn::kernels::parallel {

namespace {
constexpr std::size_t kParallelMapThreshold = 1 << 12;
}

void tanh_map(std::size_t len, const double* a, double* out) {
#pragma omp parallel for simd schedule(static) if (len >= kParallelMapThreshold)
  for (std::size_t i = 0; i < len; ++i) out[i] = std::tanh(a[i]);
}

void sigmoid_map(std::size_t len, const double* a, double* out) {
#pragma omp parallel for simd schedule(static) if (len >= kParallelMapThreshold)
  for (std::size_t i = 0; i < len; ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
}

}  // namespace frnn::kernels::parallel
