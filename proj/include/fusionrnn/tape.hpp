// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over a recorded forward trace.
//
// Every differentiable operation evaluates eagerly and appends a node holding
// its value and a backward closure. Tape::backward walks the nodes in reverse
// order, so gradients are exact for whatever was recorded. Trainable tensors
// enter the trace through Tape::parameter and receive their gradient in
// Parameter::grad (accumulated, never overwritten).

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "fusionrnn/matrix.hpp"

namespace frnn {

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}
  void zero_grad();
};

class Tape;

/// Handle to one node of a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the gradient of the node's output (and the output value
  /// itself) and pushes it to its parents through grad_sink.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out, const Matrix& value_out)>;

  explicit Tape(OpCounter* counter = nullptr) : counter_(counter) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is retained and readable through grad().
  Var variable(Matrix value);
  /// Leaf bound to a trainable tensor; backward adds into p.grad.
  Var parameter(Parameter& p);

  /// Appends an operation node. `fn` is dropped when no parent needs a
  /// gradient.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);

  /// Runs reverse accumulation from `output` seeded with `upstream`.
  void backward(Var output, const Matrix& upstream);
  /// Same with an implicit seed of 1; `output` must be 1x1.
  void backward(Var output);

  /// Gradient of the last backward pass with respect to `v`. Nodes that
  /// received no gradient report zeros.
  Matrix grad(Var v) const;

  /// Gradient buffer of `v`, allocated as zeros on first use, or nullptr
  /// when `v` does not need a gradient. Used inside backward closures.
  Matrix* grad_sink(Var v);

  bool requires_grad(Var v) const;
  OpCounter* counter() const noexcept { return counter_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool backpropagated() const noexcept { return done_; }

 private:
  friend class Var;
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  void check(Var v, const char* what) const;

  std::vector<Node> nodes_;
  OpCounter* counter_ = nullptr;
  bool done_ = false;
};

/// Differentiable operations on tape variables. All operands must live on
/// the same tape.
namespace ad {

Var matmul(Var a, Var b);
Var mul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// w * x + b with b (rows x 1) broadcast over the columns of x.
Var affine(Var w, Var x, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var softplus(Var a);
/// 1 - a
Var one_minus(Var a);
Var scale(Var a, double s);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(Var left, Var right);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Column j of the result is column ids[j] of `table`; the backward pass
/// scatters into exactly those columns.
Var gather_cols(Var table, std::span<const std::size_t> ids);
/// Column g of the result is the mean of the columns c with group[c] == g.
Var segment_mean(Var a, std::span<const std::size_t> group, std::size_t num_groups);
/// 1x1 sum of all entries.
Var sum(Var a);
/// 1x1 mean absolute percentage error of a 1xN prediction row against the
/// positive targets. The subgradient at an exact tie is 0.
Var mape_loss(Var prediction, std::span<const double> targets);

}  // namespace ad
}  // namespace frnn
