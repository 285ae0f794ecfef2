// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fusionrnn/error.hpp"
#include "fusionrnn/kernels.hpp"

namespace frnn {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

Matrix matmul(const Matrix& a, const Matrix& b, OpCounter* counter) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  Matrix out(a.rows(), b.cols());
  kernels::parallel::gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), out.data());
  count(counter, static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
  return out;
}

Matrix elementwise_mul(const Matrix& a, const Matrix& b, OpCounter* counter) {
  require_same_shape(a, b, "elementwise_mul");
  Matrix out(a.rows(), a.cols());
  kernels::parallel::hadamard(a.size(), a.data(), b.data(), out.data());
  count(counter, a.size());
  return out;
}

Matrix affine(const Matrix& w, const Matrix& x, const Matrix& b, OpCounter* counter) {
  if (b.cols() != 1 || b.rows() != w.rows())
    throw ShapeError("affine: bias " + b.shape_string() + " does not match weight " + w.shape_string());
  Matrix out = matmul(w, x, counter);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    const double bi = b[i];
    for (double& v : out.row(i)) v += bi;
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix tanh_map(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  kernels::parallel::tanh_map(a.size(), a.data(), out.data());
  return out;
}

Matrix sigmoid_map(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  kernels::parallel::sigmoid_map(a.size(), a.data(), out.data());
  return out;
}

Matrix relu_map(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

double softplus(double x) noexcept { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Matrix softplus_map(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v = softplus(v);
  return out;
}

}  // namespace frnn
