// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include "doctest.h"
#include "fusionrnn/error.hpp"
#include "fusionrnn/kernels.hpp"
#include "fusionrnn/ops.hpp"
#include "fusionrnn/rng.hpp"
#include "fusionrnn/tape.hpp"
#include "support.hpp"

using namespace frnn;
using testing::random_matrix;

TEST_CASE("matrix construction and shape checks") {
  Matrix m(2, 3);
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.size() == 6);
  CHECK_THROWS_AS(Matrix(0, 3), ShapeError);
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  const Matrix r = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(r(1, 0) == 3);
  CHECK(Matrix().empty());
}

TEST_CASE("matmul") {
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{1}, {1}});
  CHECK(matmul(a, b) == Matrix::from_rows({{3}, {7}}));

  Rng rng(5);
  const Matrix x = random_matrix(2, 7, rng);
  CHECK(matmul(Matrix::identity(2), x) == x);

  OpCounter counter;
  matmul(Matrix(2, 3, 1.0), Matrix(3, 4, 1.0), &counter);
  CHECK(counter.multiplications == 24);

  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("elementwise_mul") {
  OpCounter counter;
  CHECK(elementwise_mul(Matrix::column({1, 2, 3}), Matrix::column({2, 2, 2}), &counter) ==
        Matrix::column({2, 4, 6}));
  CHECK(counter.multiplications == 3);
  Rng rng(1);
  const Matrix x = random_matrix(3, 4, rng);
  CHECK(elementwise_mul(x, Matrix(3, 4, 0.0)) == Matrix(3, 4, 0.0));
  CHECK(elementwise_mul(x, Matrix(3, 4, 1.0)) == x);
  CHECK_THROWS_AS(elementwise_mul(Matrix(3, 4), Matrix(4, 3)), ShapeError);
}

TEST_CASE("activations") {
  CHECK(tanh_map(Matrix(1, 1, 0.0))[0] == 0.0);
  CHECK(tanh_map(Matrix(1, 1, 1.0))[0] == doctest::Approx(0.7615941559557649).epsilon(1e-14));
  CHECK(sigmoid_map(Matrix(1, 1, 0.0))[0] == 0.5);
  CHECK(sigmoid_map(Matrix(1, 1, 1.0))[0] == doctest::Approx(0.7310585786300049).epsilon(1e-14));

  Rng rng(2);
  const Matrix x = random_matrix(4, 5, rng, -6, 6);
  const Matrix t = tanh_map(x), tn = tanh_map(scale(x, -1.0));
  const Matrix s = sigmoid_map(x), sn = sigmoid_map(scale(x, -1.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(t[i] == doctest::Approx(-tn[i]).epsilon(1e-14));
    CHECK(s[i] + sn[i] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(t[i]) < 1.0);
    CHECK(s[i] > 0.0);
    CHECK(s[i] < 1.0);
  }
  // No overflow at the extremes.
  const Matrix big = sigmoid_map(Matrix::column({-800.0, 800.0}));
  CHECK(big.all_finite());
  CHECK(big[1] == 1.0);
}

TEST_CASE("affine") {
  Rng rng(3);
  const Matrix x = random_matrix(2, 3, rng);
  CHECK(affine(Matrix(4, 2, 0.0), x, Matrix(4, 1, 0.0)) == Matrix(4, 3, 0.0));
  CHECK(affine(Matrix::identity(2), x, Matrix(2, 1, 0.0)) == x);
  CHECK(affine(Matrix::from_rows({{1, 1}}), Matrix::column({2, 3}), Matrix::column({1}))[0] == 6.0);
  OpCounter counter;
  affine(Matrix(5, 3, 1.0), Matrix(3, 1, 1.0), Matrix(5, 1), &counter);
  CHECK(counter.multiplications == 15);
  CHECK_THROWS_AS(affine(Matrix(4, 2), x, Matrix(3, 1)), ShapeError);
  CHECK_THROWS_AS(affine(Matrix(4, 2), x, Matrix(4, 2)), ShapeError);
}

TEST_CASE("rng streams are seeded and portable") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    differs = differs || va != c.next_u64();
  }
  CHECK(differs);
  // Frozen first outputs pin the algorithm across platforms.
  Rng fixed(0);
  CHECK(fixed.next_u64() == 11091344671253066420ULL);
  CHECK(fixed.next_u64() == 13793997310169335082ULL);
  CHECK(fixed.next_u64() == 1900383378846508768ULL);
  Rng other(2018);
  CHECK(other.next_u64() == 15249153033058981490ULL);
  Rng u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("reference and parallel kernels agree") {
  Rng rng(11);
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {33, 300, 17}, {64, 600, 48},
                         {5, 1030, 3}, {46, 9, 2000}}) {
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    const Matrix at = random_matrix(k, m, rng);
    const Matrix bt = random_matrix(n, k, rng);
    const Matrix c0 = random_matrix(m, n, rng);
    const double tol = 1e-12 * static_cast<double>(k);
    Matrix r = c0, p = c0;
    kernels::reference::gemm_nn(m, n, k, a.data(), b.data(), r.data());
    kernels::parallel::gemm_nn(m, n, k, a.data(), b.data(), p.data());
    CHECK(testing::max_abs_diff(r, p) < tol);
    r = c0, p = c0;
    kernels::reference::gemm_tn(m, n, k, at.data(), b.data(), r.data());
    kernels::parallel::gemm_tn(m, n, k, at.data(), b.data(), p.data());
    CHECK(testing::max_abs_diff(r, p) < tol);
    r = c0, p = c0;
    kernels::reference::gemm_nt(m, n, k, a.data(), bt.data(), r.data());
    kernels::parallel::gemm_nt(m, n, k, a.data(), bt.data(), p.data());
    CHECK(testing::max_abs_diff(r, p) < tol);
  }
  const Matrix x = random_matrix(1, 10000, rng, -30, 30);
  Matrix r(1, 10000), p(1, 10000);
  kernels::reference::tanh_map(x.size(), x.data(), r.data());
  kernels::parallel::tanh_map(x.size(), x.data(), p.data());
  CHECK(testing::max_abs_diff(r, p) < 1e-15);
  kernels::reference::sigmoid_map(x.size(), x.data(), r.data());
  kernels::parallel::sigmoid_map(x.size(), x.data(), p.data());
  CHECK(testing::max_abs_diff(r, p) < 1e-15);
  kernels::reference::hadamard(x.size(), x.data(), x.data(), r.data());
  kernels::parallel::hadamard(x.size(), x.data(), x.data(), p.data());
  CHECK(r == p);
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  Rng rng(12);
  const Matrix a = random_matrix(64, 96, rng);
  const Matrix b = random_matrix(96, 700, rng);
  const int saved = kernels::max_threads();
  Matrix one(64, 700), many(64, 700);
  kernels::set_threads(1);
  kernels::parallel::gemm_nn(64, 700, 96, a.data(), b.data(), one.data());
  kernels::set_threads(4);
  kernels::parallel::gemm_nn(64, 700, 96, a.data(), b.data(), many.data());
  kernels::set_threads(saved);
  CHECK(one == many);
}

// ---------------------------------------------------------------------------
// Tape

namespace {

// Loss = sum(op(inputs) .* weights); returns max scaled error over inputs.
double primitive_check(const std::vector<Matrix>& inputs,
                       const std::function<Var(Tape&, const std::vector<Var>&)>& op, std::uint64_t seed) {
  Rng rng(seed);
  Matrix weights;
  auto eval = [&](const std::vector<Matrix>& in) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : in) vars.push_back(tape.constant(m));
    const Var out = op(tape, vars);
    if (weights.empty()) weights = random_matrix(out.rows(), out.cols(), rng, -1, 1);
    double s = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += out.value()[i] * weights[i];
    return s;
  };
  eval(inputs);
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.variable(m));
  const Var out = op(tape, vars);
  tape.backward(out, weights);
  const auto numeric = testing::numeric_grads(inputs, eval);
  double worst = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) worst = std::max(worst, testing::scaled_error(tape.grad(vars[i]), numeric[i]));
  return worst;
}

}  // namespace

TEST_CASE("primitive gradients match central differences") {
  Rng rng(21);
  auto m = [&](std::size_t r, std::size_t c) { return random_matrix(r, c, rng); };
  using V = const std::vector<Var>&;
  CHECK(primitive_check({m(3, 3), m(3, 3)}, [](Tape&, V v) { return ad::matmul(v[0], v[1]); }, 1) < 1e-6);
  CHECK(primitive_check({m(3, 4), m(4, 2)}, [](Tape&, V v) { return ad::matmul(v[0], v[1]); }, 2) < 1e-6);
  CHECK(primitive_check({m(3, 4), m(3, 4)}, [](Tape&, V v) { return ad::mul(v[0], v[1]); }, 3) < 1e-6);
  CHECK(primitive_check({m(3, 4), m(3, 4)}, [](Tape&, V v) { return ad::add(v[0], v[1]); }, 4) < 1e-6);
  CHECK(primitive_check({m(3, 4), m(3, 4)}, [](Tape&, V v) { return ad::sub(v[0], v[1]); }, 5) < 1e-6);
  CHECK(primitive_check({m(3, 2), m(2, 5), m(3, 1)}, [](Tape&, V v) { return ad::affine(v[0], v[1], v[2]); }, 6) <
        1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::tanh(v[0]); }, 7) < 1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::sigmoid(v[0]); }, 8) < 1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::relu(v[0]); }, 9) < 1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::softplus(v[0]); }, 10) < 1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::one_minus(v[0]); }, 11) < 1e-6);
  CHECK(primitive_check({m(4, 3)}, [](Tape&, V v) { return ad::scale(v[0], -1.7); }, 12) < 1e-6);
  CHECK(primitive_check({m(2, 3), m(4, 3)},
                        [](Tape&, V v) {
                          const Var parts[] = {v[0], v[1]};
                          return ad::concat_rows(parts);
                        },
                        13) < 1e-6);
  CHECK(primitive_check({m(3, 2), m(3, 4)}, [](Tape&, V v) { return ad::concat_cols(v[0], v[1]); }, 14) < 1e-6);
  CHECK(primitive_check({m(5, 3)}, [](Tape&, V v) { return ad::slice_rows(v[0], 1, 3); }, 15) < 1e-6);
  CHECK(primitive_check({m(3, 6)}, [](Tape&, V v) { return ad::slice_cols(v[0], 2, 3); }, 16) < 1e-6);
  const std::size_t ids[] = {3, 0, 3, 1};
  CHECK(primitive_check({m(2, 5)}, [&](Tape&, V v) { return ad::gather_cols(v[0], ids); }, 17) < 1e-6);
  const std::size_t groups[] = {0, 1, 0, 2, 2, 2};
  CHECK(primitive_check({m(3, 6)}, [&](Tape&, V v) { return ad::segment_mean(v[0], groups, 3); }, 18) < 1e-6);
  CHECK(primitive_check({m(3, 6)}, [](Tape&, V v) { return ad::sum(v[0]); }, 19) < 1e-6);
  const double targets[] = {5.0, 6.0, 7.0};
  CHECK(primitive_check({m(1, 3)}, [&](Tape&, V v) { return ad::mape_loss(v[0], targets); }, 20) < 1e-6);
}

TEST_CASE("tanh derivative at zero is one") {
  Tape tape;
  const Var x = tape.variable(Matrix(1, 1, 0.0));
  tape.backward(ad::tanh(x));
  CHECK(tape.grad(x)[0] == 1.0);
}

TEST_CASE("matmul backward equals G*B^T and A^T*G") {
  Rng rng(31);
  const Matrix a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng), g = random_matrix(3, 3, rng);
  Tape tape;
  const Var va = tape.variable(a), vb = tape.variable(b);
  tape.backward(ad::matmul(va, vb), g);
  CHECK(testing::max_abs_diff(tape.grad(va), matmul(g, transpose(b))) < 1e-14);
  CHECK(testing::max_abs_diff(tape.grad(vb), matmul(transpose(a), g)) < 1e-14);
}

TEST_CASE("tape state errors") {
  Tape tape;
  const Var x = tape.variable(Matrix(1, 1, 2.0));
  const Var y = ad::mul(x, x);
  CHECK_THROWS_AS(tape.grad(x), StateError);
  tape.backward(y);
  CHECK(tape.grad(x)[0] == 4.0);
  CHECK_THROWS_AS(tape.backward(y), StateError);
  CHECK_THROWS_AS(ad::add(x, x), StateError);
  Tape other;
  const Var z = other.variable(Matrix(1, 1, 1.0));
  CHECK_THROWS_AS(ad::add(z, x), StateError);
  CHECK_THROWS_AS(Var().value(), StateError);
}

TEST_CASE("gather_cols names the offending id") {
  Tape tape;
  const Var t = tape.variable(Matrix(2, 4));
  const std::size_t ids[] = {1, 9};
  try {
    ad::gather_cols(t, ids);
    FAIL("expected an index error");
  } catch (const IndexError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('9') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
}

TEST_CASE("parameters accumulate gradients") {
  Parameter p("w", Matrix(1, 1, 3.0));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    const Var w = tape.parameter(p);
    tape.backward(ad::mul(w, w));
  }
  CHECK(p.grad[0] == 12.0);
  p.zero_grad();
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("operations on finite inputs stay finite") {
  Rng rng(41);
  const Matrix x = random_matrix(6, 6, rng, -50, 50);
  CHECK(tanh_map(x).all_finite());
  CHECK(sigmoid_map(x).all_finite());
  CHECK(softplus_map(scale(x, 20)).all_finite());
  CHECK(matmul(x, x).all_finite());
}
