// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fusionrnn/error.hpp"
#include "fusionrnn/kernels.hpp"
#include "fusionrnn/ops.hpp"

namespace frnn {

void Parameter::zero_grad() {
  if (grad.same_shape(value))
    grad.fill(0.0);
  else
    grad = Matrix(value.rows(), value.cols());
}

const Matrix& Var::value() const {
  if (!tape_) throw StateError("use of an unbound tape variable");
  return tape_->nodes_[id_].value;
}

void Tape::check(Var v, const char* what) const {
  if (v.tape_ != this || v.id_ >= nodes_.size())
    throw StateError(std::string(what) + ": variable was not recorded on this tape");
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, &p, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  if (done_) throw StateError("cannot record on a tape that has already been backpropagated");
  bool needs = false;
  for (Var p : parents) {
    check(p, "record");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(Var v) const {
  check(v, "requires_grad");
  return nodes_[v.id_].requires_grad;
}

Matrix* Tape::grad_sink(Var v) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Matrix(node.value.rows(), node.value.cols());
  return &node.grad;
}

void Tape::backward(Var output, const Matrix& upstream) {
  check(output, "backward");
  if (done_) throw StateError("backward: tape has already been backpropagated");
  Node& out = nodes_[output.id_];
  require_same_shape(out.value, upstream, "backward seed");
  done_ = true;
  if (!out.requires_grad) return;
  out.grad = upstream;
  for (std::size_t i = output.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, node.grad, node.value);
    if (node.param) {
      Parameter& p = *node.param;
      if (!p.grad.same_shape(p.value)) p.zero_grad();
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] += node.grad[k];
    }
  }
}

void Tape::backward(Var output) {
  check(output, "backward");
  const Matrix& v = nodes_[output.id_].value;
  if (v.rows() != 1 || v.cols() != 1)
    throw ShapeError("backward: implicit seed needs a 1x1 output, got " + v.shape_string());
  backward(output, Matrix(1, 1, 1.0));
}

Matrix Tape::grad(Var v) const {
  check(v, "grad");
  if (!done_) throw StateError("grad: backward has not been run on this tape");
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return Matrix(node.value.rows(), node.value.cols());
  return node.grad;
}

// ---------------------------------------------------------------------------

namespace ad {
namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape())
    throw StateError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

void axpy(Matrix& dst, const Matrix& src) {
  double* d = dst.data();
  const double* s = src.data();
  const std::size_t n = dst.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Matrix out = frnn::matmul(a.value(), b.value(), t.counter());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (Matrix* da = tp.grad_sink(a))  // dA += G * B^T
      kernels::parallel::gemm_nt(av.rows(), av.cols(), g.cols(), g.data(), bv.data(), da->data());
    if (Matrix* db = tp.grad_sink(b))  // dB += A^T * G
      kernels::parallel::gemm_tn(bv.rows(), bv.cols(), av.rows(), av.data(), g.data(), db->data());
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  Matrix out = elementwise_mul(a.value(), b.value(), t.counter());
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    const std::size_t n = g.size();
    if (Matrix* da = tp.grad_sink(a)) {
      const double* bv = b.value().data();
      for (std::size_t i = 0; i < n; ++i) (*da)[i] += g[i] * bv[i];
    }
    if (Matrix* db = tp.grad_sink(b)) {
      const double* av = a.value().data();
      for (std::size_t i = 0; i < n; ++i) (*db)[i] += g[i] * av[i];
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  return t.record(frnn::add(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    if (Matrix* da = tp.grad_sink(a)) axpy(*da, g);
    if (Matrix* db = tp.grad_sink(b)) axpy(*db, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  return t.record(frnn::subtract(a.value(), b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g, const Matrix&) {
    if (Matrix* da = tp.grad_sink(a)) axpy(*da, g);
    if (Matrix* db = tp.grad_sink(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
  });
}

Var affine(Var w, Var x, Var b) {
  Tape& t = same_tape(w, x, "affine");
  same_tape(w, b, "affine");
  Matrix out = frnn::affine(w.value(), x.value(), b.value(), t.counter());
  return t.record(std::move(out), {w, x, b}, [w, x, b](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& wv = w.value();
    const Matrix& xv = x.value();
    if (Matrix* dw = tp.grad_sink(w))
      kernels::parallel::gemm_nt(wv.rows(), wv.cols(), g.cols(), g.data(), xv.data(), dw->data());
    if (Matrix* dx = tp.grad_sink(x))
      kernels::parallel::gemm_tn(xv.rows(), xv.cols(), wv.rows(), wv.data(), g.data(), dx->data());
    if (Matrix* db = tp.grad_sink(b))
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double acc = 0.0;
        for (double v : g.row(i)) acc += v;
        (*db)[i] += acc;
      }
  });
}

Var tanh(Var a) {
  return a.tape()->record(tanh_map(a.value()), {a}, [a](Tape& tp, const Matrix& g, const Matrix& y) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  return a.tape()->record(sigmoid_map(a.value()), {a}, [a](Tape& tp, const Matrix& g, const Matrix& y) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.record(relu_map(a.value()), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) (*da)[i] += g[i];
  });
}

Var softplus(Var a) {
  Tape& t = *a.tape();
  return t.record(softplus_map(a.value()), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    const Matrix& x = a.value();
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * kernels::sigmoid(x[i]);
  });
}

Var one_minus(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.values()) v = 1.0 - v;
  return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] -= g[i];
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(frnn::scale(a.value(), s), {a}, [a, s](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += s * g[i];
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& t = *parts.front().tape();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    same_tape(parts.front(), p, "concat_rows");
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + parts.front().value().shape_string() + " vs " +
                       p.value().shape_string());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset * cols);
    offset += v.rows();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [saved](Tape& tp, const Matrix& g, const Matrix&) {
    std::size_t off = 0;
    for (Var p : saved) {
      const std::size_t n = p.rows() * p.cols();
      if (Matrix* dp = tp.grad_sink(p))
        for (std::size_t i = 0; i < n; ++i) (*dp)[i] += g[off + i];
      off += n;
    }
  });
}

Var concat_cols(Var left, Var right) {
  Tape& t = same_tape(left, right, "concat_cols");
  const Matrix& l = left.value();
  const Matrix& r = right.value();
  if (l.rows() != r.rows())
    throw ShapeError("concat_cols: row mismatch " + l.shape_string() + " vs " + r.shape_string());
  Matrix out(l.rows(), l.cols() + r.cols());
  for (std::size_t i = 0; i < l.rows(); ++i) {
    std::copy(l.row(i).begin(), l.row(i).end(), out.row(i).begin());
    std::copy(r.row(i).begin(), r.row(i).end(), out.row(i).begin() + l.cols());
  }
  return t.record(std::move(out), {left, right}, [left, right](Tape& tp, const Matrix& g, const Matrix&) {
    const std::size_t lc = left.cols();
    const std::size_t rc = right.cols();
    Matrix* dl = tp.grad_sink(left);
    Matrix* dr = tp.grad_sink(right);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto grow = g.row(i);
      if (dl)
        for (std::size_t j = 0; j < lc; ++j) (*dl)(i, j) += grow[j];
      if (dr)
        for (std::size_t j = 0; j < rc; ++j) (*dr)(i, j) += grow[lc + j];
    }
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Matrix& v = a.value();
  if (count == 0 || start + count > v.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + v.shape_string());
  Matrix out(count, v.cols());
  std::copy(v.data() + start * v.cols(), v.data() + (start + count) * v.cols(), out.data());
  return a.tape()->record(std::move(out), {a}, [a, start](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    const std::size_t off = start * g.cols();
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[off + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& v = a.value();
  if (count == 0 || start + count > v.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + v.shape_string());
  Matrix out(v.rows(), count);
  for (std::size_t i = 0; i < v.rows(); ++i)
    std::copy(v.row(i).begin() + start, v.row(i).begin() + start + count, out.row(i).begin());
  return a.tape()->record(std::move(out), {a}, [a, start](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto grow = g.row(i);
      auto drow = da->row(i);
      for (std::size_t j = 0; j < g.cols(); ++j) drow[start + j] += grow[j];
    }
  });
}

Var gather_cols(Var table, std::span<const std::size_t> ids) {
  const Matrix& v = table.value();
  if (ids.empty()) throw ShapeError("gather_cols: no column ids");
  for (std::size_t id : ids)
    if (id >= v.cols())
      throw IndexError("gather_cols: id " + std::to_string(id) + " out of range for cardinality " +
                       std::to_string(v.cols()));
  Matrix out(v.rows(), ids.size());
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto src = v.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < ids.size(); ++j) dst[j] = src[ids[j]];
  }
  std::vector<std::size_t> saved(ids.begin(), ids.end());
  return table.tape()->record(std::move(out), {table}, [table, saved](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* dt = tp.grad_sink(table);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto grow = g.row(i);
      auto drow = dt->row(i);
      for (std::size_t j = 0; j < saved.size(); ++j) drow[saved[j]] += grow[j];
    }
  });
}

Var segment_mean(Var a, std::span<const std::size_t> group, std::size_t num_groups) {
  const Matrix& v = a.value();
  if (group.size() != v.cols())
    throw ShapeError("segment_mean: " + std::to_string(group.size()) + " group labels for " +
                     v.shape_string());
  std::vector<double> counts(num_groups, 0.0);
  for (std::size_t gidx : group) {
    if (gidx >= num_groups) throw IndexError("segment_mean: group label out of range");
    counts[gidx] += 1.0;
  }
  for (double c : counts)
    if (c == 0.0) throw ShapeError("segment_mean: empty group");
  Matrix out(v.rows(), num_groups);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto src = v.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < group.size(); ++j) dst[group[j]] += src[j];
    for (std::size_t k = 0; k < num_groups; ++k) dst[k] /= counts[k];
  }
  std::vector<std::size_t> saved(group.begin(), group.end());
  return a.tape()->record(std::move(out), {a}, [a, saved, counts](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto grow = g.row(i);
      auto drow = da->row(i);
      for (std::size_t j = 0; j < saved.size(); ++j) drow[j] += grow[saved[j]] / counts[saved[j]];
    }
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().values()) acc += v;
  return a.tape()->record(Matrix(1, 1, acc), {a}, [a](Tape& tp, const Matrix& g, const Matrix&) {
    Matrix* da = tp.grad_sink(a);
    for (double& v : da->values()) v += g[0];
  });
}

Var mape_loss(Var prediction, std::span<const double> targets) {
  const Matrix& p = prediction.value();
  if (p.rows() != 1 || p.cols() != targets.size())
    throw ShapeError("mape_loss: prediction " + p.shape_string() + " vs " + std::to_string(targets.size()) +
                     " targets");
  double acc = 0.0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (!(targets[j] > 0.0)) throw DomainError("mape_loss: targets must be positive");
    acc += std::abs(targets[j] - p[j]) / targets[j];
  }
  const double n = static_cast<double>(targets.size());
  std::vector<double> y(targets.begin(), targets.end());
  return prediction.tape()->record(Matrix(1, 1, acc / n), {prediction},
                                   [prediction, y, n](Tape& tp, const Matrix& g, const Matrix&) {
                                     const Matrix& pv = prediction.value();
                                     Matrix* dp = tp.grad_sink(prediction);
                                     for (std::size_t j = 0; j < y.size(); ++j) {
                                       const double d = pv[j] - y[j];
                                       const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                                       (*dp)[j] += g[0] * sign / (n * y[j]);
                                     }
                                   });
}

}  // namespace ad
}  // namespace frnn
