// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fusionrnn/matrix.hpp"
#include "fusionrnn/rng.hpp"
#include "fusionrnn/tape.hpp"

namespace testing {

inline frnn::Matrix random_matrix(std::size_t r, std::size_t c, frnn::Rng& rng, double lo = -2.0, double hi = 2.0) {
  frnn::Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

inline double max_abs_diff(const frnn::Matrix& a, const frnn::Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Tensor-scaled relative error: max |a - n| / max(max |a|, max |n|, 1e-12).
inline double scaled_error(const frnn::Matrix& analytic, const frnn::Matrix& numeric) {
  double scale = 1e-12;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  return max_abs_diff(analytic, numeric) / scale;
}

// Central differences of a scalar function of the inputs, step 1e-5.
inline std::vector<frnn::Matrix> numeric_grads(std::vector<frnn::Matrix> inputs,
                                               const std::function<double(const std::vector<frnn::Matrix>&)>& f) {
  constexpr double h = 1e-5;
  std::vector<frnn::Matrix> out;
  for (auto& in : inputs) {
    frnn::Matrix g(in.rows(), in.cols());
    for (std::size_t k = 0; k < in.size(); ++k) {
      const double saved = in[k];
      in[k] = saved + h;
      const double up = f(inputs);
      in[k] = saved - h;
      const double down = f(inputs);
      in[k] = saved;
      g[k] = (up - down) / (2 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace testing
