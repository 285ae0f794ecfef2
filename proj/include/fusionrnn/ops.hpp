// SPDX-License-Identifier: Apache-2.0
#pragma once

// Eager matrix operations. Counted operations take an optional OpCounter and
// add one per scalar multiplication they perform.

#include "fusionrnn/matrix.hpp"

namespace frnn {

/// a * b. Adds a.rows * a.cols * b.cols to `counter`.
Matrix matmul(const Matrix& a, const Matrix& b, OpCounter* counter = nullptr);
/// Hadamard product. Adds rows * cols to `counter`.
Matrix elementwise_mul(const Matrix& a, const Matrix& b, OpCounter* counter = nullptr);
/// w * x + b, with the column vector b broadcast over the columns of x.
Matrix affine(const Matrix& w, const Matrix& x, const Matrix& b, OpCounter* counter = nullptr);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix transpose(const Matrix& a);

Matrix tanh_map(const Matrix& a);
Matrix sigmoid_map(const Matrix& a);
Matrix relu_map(const Matrix& a);
/// log(1 + exp(a)), evaluated without overflow.
Matrix softplus_map(const Matrix& a);

double softplus(double x) noexcept;

/// Throws ShapeError naming both shapes unless `a` and `b` have equal shape.
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace frnn
