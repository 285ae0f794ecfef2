// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recurrent cells: the gateless Fusion RNN (fusion rounds followed by an
// Elman-style transport update) and the Elman, GRU and LSTM baselines.
//
// Each cell has an eager Matrix API (with optional multiplication counting)
// and a tape API used for training. The eager API is a thin wrapper over the
// tape API, so both always compute the same thing.

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

#include "fusionrnn/matrix.hpp"
#include "fusionrnn/rng.hpp"
#include "fusionrnn/tape.hpp"

namespace frnn {

enum class CellKind { fusion, elman, gru, lstm };

std::string_view to_string(CellKind kind) noexcept;
/// Accepts "fusion", "elman", "gru", "lstm"; throws ValidationError otherwise.
CellKind parse_cell_kind(std::string_view name);

inline constexpr int kMaxFusionRounds = 16;

struct FusionCellParams {
  std::size_t input_size = 0;   // m
  std::size_t hidden_size = 0;  // n
  int rounds = 0;               // r, fusion iterations
  Parameter fx;  // m x n, hidden -> input-shaped modulation
  Parameter fh;  // n x m, input -> hidden-shaped modulation
  Parameter wx;  // n x m
  Parameter wh;  // n x n
  Parameter b;   // n x 1
};

struct ElmanCellParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter wx, wh, b;
};

/// Reset (r), update (z) and candidate (c) blocks, one bias each.
struct GruCellParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter wr, ur, br;
  Parameter wz, uz, bz;
  Parameter wc, uc, bc;
};

/// Input (i), forget (f), output (o) gates and cell candidate (g).
struct LstmCellParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Parameter wi, ui, bi;
  Parameter wf, uf, bf;
  Parameter wo, uo, bo;
  Parameter wg, ug, bg;
};

using CellParams = std::variant<FusionCellParams, ElmanCellParams, GruCellParams, LstmCellParams>;

CellKind kind_of(const CellParams& params) noexcept;
std::size_t input_size(const CellParams& params) noexcept;
std::size_t hidden_size(const CellParams& params) noexcept;

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. `rounds`
/// is only used by the fusion cell and must lie in [0, 16].
CellParams init_params(CellKind kind, std::size_t m, std::size_t n, int rounds, Rng& rng);
/// Zero-filled parameters of the right shapes.
CellParams zero_params(CellKind kind, std::size_t m, std::size_t n, int rounds = 0);

/// All tensors of a cell in a fixed, documented order.
std::vector<Parameter*> tensors(CellParams& params);
std::vector<const Parameter*> tensors(const CellParams& params);
/// Number of scalar parameters, counted tensor by tensor.
std::size_t enumerate_parameters(const CellParams& params);

// ---------------------------------------------------------------------------
// Eager API. Inputs are column vectors (or column batches).

struct FusedPair {
  Matrix x_fused;  // m x k
  Matrix h_fused;  // n x k
};

struct LstmState {
  Matrix h;
  Matrix c;
};

FusedPair fusion_module(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p,
                        OpCounter* counter = nullptr);
Matrix transport_module(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p,
                        OpCounter* counter = nullptr);
Matrix fusion_cell_step(const Matrix& x, const Matrix& h_prev, const FusionCellParams& p,
                        OpCounter* counter = nullptr);
Matrix elman_cell_step(const Matrix& x, const Matrix& h_prev, const ElmanCellParams& p,
                       OpCounter* counter = nullptr);
Matrix gru_cell_step(const Matrix& x, const Matrix& h_prev, const GruCellParams& p,
                     OpCounter* counter = nullptr);
LstmState lstm_cell_step(const Matrix& x, const Matrix& h_prev, const Matrix& c_prev,
                         const LstmCellParams& p, OpCounter* counter = nullptr);

/// Multiplications performed by one instrumented step of a cell on a single
/// column input.
std::uint64_t instrumented_step_multiplications(const CellParams& params);

// ---------------------------------------------------------------------------
// Tape API.

/// Recurrent state on a tape; `c` is only used by the LSTM.
struct CellState {
  Var h;
  Var c;
};

/// A cell whose tensors have been placed on a tape, either as trainable
/// parameters or as constants.
class BoundCell {
 public:
  BoundCell(Tape& tape, CellParams& params, bool trainable = true);
  BoundCell(Tape& tape, const CellParams& params);

  CellKind kind() const noexcept { return kind_; }
  bool has_cell_state() const noexcept { return kind_ == CellKind::lstm; }
  /// Zero state for `batch` columns.
  CellState zero_state(std::size_t batch) const;
  CellState step(Var x, const CellState& state) const;

  /// Fusion rounds only; returns {x_fused, h_fused}.
  std::pair<Var, Var> fuse(Var x, Var h) const;

 private:
  void bind(const std::vector<const Parameter*>& src, std::vector<Parameter*>* trainable);
  void check_inputs(Var x, const CellState& state) const;

  Tape* tape_;
  CellKind kind_;
  std::size_t m_;
  std::size_t n_;
  int rounds_ = 0;
  std::vector<Var> t_;
};

}  // namespace frnn
