// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/cells.hpp"

#include <cmath>
#include <string>

#include "fusionrnn/error.hpp"

namespace frnn {
namespace {

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

struct Shape {
  const char* name;
  std::size_t rows;
  std::size_t cols;
  bool bias;
};

// Tensor layout per kind, in the canonical order used everywhere.
std::vector<Shape> layout(CellKind kind, std::size_t m, std::size_t n) {
  switch (kind) {
    case CellKind::fusion:
      return {{"Fx", m, n, false}, {"Fh", n, m, false}, {"Wx", n, m, false}, {"Wh", n, n, false}, {"b", n, 1, true}};
    case CellKind::elman:
      return {{"Wx", n, m, false}, {"Wh", n, n, false}, {"b", n, 1, true}};
    case CellKind::gru:
      return {{"Wr", n, m, false}, {"Ur", n, n, false}, {"br", n, 1, true},
              {"Wz", n, m, false}, {"Uz", n, n, false}, {"bz", n, 1, true},
              {"Wc", n, m, false}, {"Uc", n, n, false}, {"bc", n, 1, true}};
    case CellKind::lstm:
      return {{"Wi", n, m, false}, {"Ui", n, n, false}, {"bi", n, 1, true},
              {"Wf", n, m, false}, {"Uf", n, n, false}, {"bf", n, 1, true},
              {"Wo", n, m, false}, {"Uo", n, n, false}, {"bo", n, 1, true},
              {"Wg", n, m, false}, {"Ug", n, n, false}, {"bg", n, 1, true}};
  }
  return {};
}

CellParams empty_params(CellKind kind, std::size_t m, std::size_t n, int rounds) {
  if (m == 0 || n == 0) throw ValidationError("cell sizes must be positive");
  switch (kind) {
    case CellKind::fusion: {
      if (rounds < 0 || rounds > kMaxFusionRounds)
        throw ValidationError("fusion rounds must lie in [0, " + std::to_string(kMaxFusionRounds) +
                              "], got " + std::to_string(rounds));
      FusionCellParams p;
      p.input_size = m;
      p.hidden_size = n;
      p.rounds = rounds;
      return p;
    }
    case CellKind::elman: {
      ElmanCellParams p;
      p.input_size = m;
      p.hidden_size = n;
      return p;
    }
    case CellKind::gru: {
      GruCellParams p;
      p.input_size = m;
      p.hidden_size = n;
      return p;
    }
    case CellKind::lstm: {
      LstmCellParams p;
      p.input_size = m;
      p.hidden_size = n;
      return p;
    }
  }
  throw ValidationError("unknown cell kind");
}

}  // namespace

std::string_view to_string(CellKind kind) noexcept {
  switch (kind) {
    case CellKind::fusion: return "fusion";
    case CellKind::elman: return "elman";
    case CellKind::gru: return "gru";
    case CellKind::lstm: return "lstm";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "fusion") return CellKind::fusion;
  if (name == "elman") return CellKind::elman;
  if (name == "gru") return CellKind::gru;
  if (name == "lstm") return CellKind::lstm;
  throw ValidationError("unknown cell variant '" + std::string(name) + "' (expected fusion, elman, gru or lstm)");
}

CellKind kind_of(const CellParams& params) noexcept {
  return static_cast<CellKind>(params.index());
}

std::size_t input_size(const CellParams& params) noexcept {
  return std::visit([](const auto& p) { return p.input_size; }, params);
}

std::size_t hidden_size(const CellParams& params) noexcept {
  return std::visit([](const auto& p) { return p.hidden_size; }, params);
}

std::vector<Parameter*> tensors(CellParams& params) {
  return std::visit(
      [](auto& p) -> std::vector<Parameter*> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FusionCellParams>)
          return {&p.fx, &p.fh, &p.wx, &p.wh, &p.b};
        else if constexpr (std::is_same_v<T, ElmanCellParams>)
          return {&p.wx, &p.wh, &p.b};
        else if constexpr (std::is_same_v<T, GruCellParams>)
          return {&p.wr, &p.ur, &p.br, &p.wz, &p.uz, &p.bz, &p.wc, &p.uc, &p.bc};
        else
          return {&p.wi, &p.ui, &p.bi, &p.wf, &p.uf, &p.bf, &p.wo, &p.uo, &p.bo, &p.wg, &p.ug, &p.bg};
      },
      params);
}

std::vector<const Parameter*> tensors(const CellParams& params) {
  auto mut = tensors(const_cast<CellParams&>(params));
  return {mut.begin(), mut.end()};
}

std::size_t enumerate_parameters(const CellParams& params) {
  std::size_t total = 0;
  for (const Parameter* p : tensors(params)) total += p->value.size();
  return total;
}

CellParams init_params(CellKind kind, std::size_t m, std::size_t n, int rounds, Rng& rng) {
  CellParams params = empty_params(kind, m, n, rounds);
  auto shapes = layout(kind, m, n);
  auto ts = tensors(params);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ts[i]->name = shapes[i].name;
    ts[i]->value = shapes[i].bias ? Matrix(shapes[i].rows, 1) : glorot(shapes[i].rows, shapes[i].cols, rng);
  }
  return params;
}

CellParams zero_params(CellKind kind, std::size_t m, std::size_t n, int rounds) {
  CellParams params = empty_params(kind, m, n, rounds);
  auto shapes = layout(kind, m, n);
  auto ts = tensors(params);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    ts[i]->name = shapes[i].name;
    ts[i]->value = Matrix(shapes[i].rows, shapes[i].cols);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Tape API

BoundCell::BoundCell(Tape& tape, CellParams& params, bool trainable)
    : tape_(&tape), kind_(kind_of(params)), m_(input_size(params)), n_(hidden_size(params)) {
  if (auto* f = std::get_if<FusionCellParams>(&params)) rounds_ = f->rounds;
  auto mut = tensors(params);
  std::vector<const Parameter*> src(mut.begin(), mut.end());
  bind(src, trainable ? &mut : nullptr);
}

BoundCell::BoundCell(Tape& tape, const CellParams& params)
    : tape_(&tape), kind_(kind_of(params)), m_(input_size(params)), n_(hidden_size(params)) {
  if (auto* f = std::get_if<FusionCellParams>(&params)) rounds_ = f->rounds;
  bind(tensors(params), nullptr);
}

void BoundCell::bind(const std::vector<const Parameter*>& src, std::vector<Parameter*>* trainable) {
  auto shapes = layout(kind_, m_, n_);
  t_.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Matrix& v = src[i]->value;
    if (v.rows() != shapes[i].rows || v.cols() != shapes[i].cols)
      throw ShapeError(std::string(to_string(kind_)) + " cell tensor " + shapes[i].name + " has shape " +
                       v.shape_string() + ", expected " + std::to_string(shapes[i].rows) + "x" +
                       std::to_string(shapes[i].cols));
    t_.push_back(trainable ? tape_->parameter(*(*trainable)[i]) : tape_->constant(v));
  }
}

CellState BoundCell::zero_state(std::size_t batch) const {
  CellState s;
  s.h = tape_->constant(Matrix(n_, batch));
  if (has_cell_state()) s.c = tape_->constant(Matrix(n_, batch));
  return s;
}

void BoundCell::check_inputs(Var x, const CellState& state) const {
  const Matrix& xv = x.value();
  const Matrix& hv = state.h.value();
  if (xv.rows() != m_ || hv.rows() != n_ || xv.cols() != hv.cols())
    throw ShapeError(std::string(to_string(kind_)) + " cell expects x " + std::to_string(m_) + "xk and h " +
                     std::to_string(n_) + "xk, got x " + xv.shape_string() + " and h " + hv.shape_string());
  if (has_cell_state() && !state.c.value().same_shape(hv))
    throw ShapeError("lstm cell state " + state.c.value().shape_string() + " does not match h " +
                     hv.shape_string());
}

std::pair<Var, Var> BoundCell::fuse(Var x, Var h) const {
  if (kind_ != CellKind::fusion) throw StateError("fuse() is only defined for the fusion cell");
  // Odd rounds rewrite x from the latest h, even rounds rewrite h from the
  // latest x; x^-1 = x and h^0 = h_prev.
  const Var fx = t_[0], fh = t_[1];
  for (int i = 1; i <= rounds_; ++i) {
    if (i % 2 == 1)
      x = ad::mul(ad::tanh(ad::matmul(fx, h)), x);
    else
      h = ad::mul(ad::tanh(ad::matmul(fh, x)), h);
  }
  return {x, h};
}

namespace {

// tanh/sigmoid argument W x + U h + b
Var preactivation(Var w, Var x, Var u, Var h, Var b) { return ad::add(ad::matmul(w, x), ad::affine(u, h, b)); }

}  // namespace

CellState BoundCell::step(Var x, const CellState& state) const {
  check_inputs(x, state);
  const Var h = state.h;
  switch (kind_) {
    case CellKind::fusion: {
      auto [xf, hf] = fuse(x, h);
      return {ad::tanh(preactivation(t_[2], xf, t_[3], hf, t_[4])), {}};
    }
    case CellKind::elman:
      return {ad::tanh(preactivation(t_[0], x, t_[1], h, t_[2])), {}};
    case CellKind::gru: {
      const Var r = ad::sigmoid(preactivation(t_[0], x, t_[1], h, t_[2]));
      const Var z = ad::sigmoid(preactivation(t_[3], x, t_[4], h, t_[5]));
      const Var cand = ad::tanh(preactivation(t_[6], x, t_[7], ad::mul(r, h), t_[8]));
      return {ad::add(ad::mul(ad::one_minus(z), cand), ad::mul(z, h)), {}};
    }
    case CellKind::lstm: {
      const Var i = ad::sigmoid(preactivation(t_[0], x, t_[1], h, t_[2]));
      const Var f = ad::sigmoid(preactivation(t_[3], x, t_[4], h, t_[5]));
      const Var o = ad::sigmoid(preactivation(t_[6], x, t_[7], h, t_[8]));
      const Var g = ad::tanh(preactivation(t_[9], x, t_[10], h, t_[11]));
      const Var c = ad::add(ad::mul(f, state.c), ad::mul(i, g));
      return {ad::mul(o, ad::tanh(c)), c};
    }
  }
  throw StateError("unknown cell kind");
}

// ---------------------------------------------------------------------------
// Eager API

FusedPair fusion_module(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p, OpCounter* counter) {
  Tape tape(counter);
  CellParams params = p;
  BoundCell cell(tape, std::as_const(params));
  if (x.rows() != p.input_size || h_prev.rows() != p.hidden_size || x.cols() != h_prev.cols())
    throw ShapeError("fusion_module expects x " + std::to_string(p.input_size) + "xk and h " +
                     std::to_string(p.hidden_size) + "xk, got " + x.shape_string() + " and " +
                     h_prev.shape_string());
  auto [xf, hf] = cell.fuse(tape.constant(x), tape.constant(h_prev));
  return {xf.value(), hf.value()};
}

Matrix transport_module(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p, OpCounter* counter) {
  ElmanCellParams e;
  e.input_size = p.input_size;
  e.hidden_size = p.hidden_size;
  e.wx = p.wx;
  e.wh = p.wh;
  e.b = p.b;
  return elman_cell_step(x, h_prev, e, counter);
}

Matrix fusion_cell_step(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p, OpCounter* counter) {
  Tape tape(counter);
  const CellParams params = p;
  BoundCell cell(tape, params);
  return cell.step(tape.constant(x), {tape.constant(h_prev), {}}).h.value();
}

Matrix elman_cell_step(const Matrix& x, const Matrix& h_prev, const ElmanCellParams& p, OpCounter* counter) {
  Tape tape(counter);
  const CellParams params = p;
  BoundCell cell(tape, params);
  return cell.step(tape.constant(x), {tape.constant(h_prev), {}}).h.value();
}

Matrix gru_cell_step(const Matrix& x, const Matrix& h_prev, const GruCellParams& p, OpCounter* counter) {
  Tape tape(counter);
  const CellParams params = p;
  BoundCell cell(tape, params);
  return cell.step(tape.constant(x), {tape.constant(h_prev), {}}).h.value();
}

LstmState lstm_cell_step(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev, const LstmCellParams& p,
                         OpCounter* counter) {
  Tape tape(counter);
  const CellParams params = p;
  BoundCell cell(tape, params);
  CellState s = cell.step(tape.constant(x), {tape.constant(h_prev), tape.constant(c_prev)});
  return {s.h.value(), s.c.value()};
}

std::uint64_t instrumented_step_multiplications(const CellParams& params) {
  OpCounter counter;
  Tape tape(&counter);
  BoundCell cell(tape, params);
  const Var x = tape.constant(Matrix(input_size(params), 1, 0.5));
  CellState s = cell.zero_state(1);
  cell.step(x, s);
  return counter.multiplications;
}

}  // namespace frnn
