// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adam, the MAPE training loop, evaluation, finite-difference gradient checks
// and the fusion-rounds sweep.
//
// Metrics log: one JSON object per line,
//   {"step":500,"split":"val","mape":0.123,"mae":45.6,"rmse":78.9,"wall_seconds":12.3}
// "train" records summarise the minibatches since the previous record, "val"
// records a full pass over the validation split, and a final "test" record is
// written for the best checkpoint.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusionrnn/eta_model.hpp"
#include "fusionrnn/metrics.hpp"

namespace frnn {

struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update. Moments are allocated on the first call
/// and must keep the parameter shapes afterwards.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state);
void adam_step(std::span<Parameter* const> params, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

struct TrainConfig {
  std::int64_t max_steps = 20000;
  std::size_t batch_size = 256;
  std::int64_t eval_every = 500;
  std::uint64_t seed = 7;
  int patience = 10;          // evaluations without a validation improvement
  double lr = 2e-4;
  double clip_norm = 5.0;     // 0 disables clipping
  bool scale_output_to_data = true;
  bool sequential = false;    // one thread, wall_seconds logged as 0
  int threads = 0;            // 0 = OpenMP default
  std::size_t eval_batch_size = 1024;

  void validate() const;
};

struct LogRecord {
  std::int64_t step = 0;
  std::string split;
  MetricsReport metrics;
  double wall_seconds = 0.0;

  std::string to_json_line() const;
};

struct TrainResult {
  EtaModel model;  // best validation checkpoint
  std::vector<LogRecord> history;
  MetricsReport best_val;
  std::int64_t best_step = 0;
  std::int64_t steps_run = 0;
  bool early_stopped = false;
  std::optional<MetricsReport> test;

  Json report_json(const TrainConfig& cfg) const;
};

/// Trains from a seeded initialisation. Records are also streamed to `log`
/// when given. Throws DivergenceError when the loss becomes non-finite.
TrainResult train(const EtaModelConfig& model_cfg, const TrainConfig& cfg, const Splits& data,
                  std::ostream* log = nullptr, std::int64_t utc_offset_s = 0);

/// Full pass over `records`. Throws DomainError when empty.
MetricsReport evaluate(const EtaModel& model, std::span<const TripRecord> records,
                       std::size_t batch_size = 1024, std::int64_t utc_offset_s = 0);
std::vector<double> predict_all(const EtaModel& model, std::span<const TripRecord> records,
                                std::size_t batch_size = 1024, std::int64_t utc_offset_s = 0);

// ---------------------------------------------------------------------------
// Gradient checks

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct GradcheckReport {
  std::string variant;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
  std::vector<TensorCheck> tensors;

  Json to_json() const;
};

/// Builds a scalar loss on a fresh tape, binding `params` as trainable.
using LossBuilder = std::function<Var(Tape&)>;

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Compares the tape gradient of every entry of `params` against central
/// differences. Per tensor, the error is
///   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, 1e-12)
/// so entries whose true gradient is tiny are judged on the tensor's scale.
GradcheckReport gradcheck(std::span<Parameter* const> params, const LossBuilder& loss, double tolerance,
                          double step = kFiniteDifferenceStep);

/// Cell check: loss is a fixed random linear functional of every hidden
/// (and cell) state over `seq_len` steps on a batch of 3 columns.
GradcheckReport gradcheck_cell(CellKind kind, int rounds, double tolerance, std::uint64_t seed = 1,
                               std::size_t m = 6, std::size_t n = 6, std::size_t seq_len = 5);

/// Toy model with every width <= 8: MAPE loss over a small batch of trips of
/// mixed lengths (3 links among them).
EtaModelConfig toy_model_config(EncoderKind encoder, int rounds = 2);
GradcheckReport gradcheck_model(EncoderKind encoder, int rounds, double tolerance, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  int rounds = 0;
  MetricsReport val;
  MetricsReport test;
  std::int64_t best_step = 0;
  std::size_t parameters = 0;

  std::string to_json_line() const;
};

/// One fusion model per value of r, all with the same seeds and data.
std::vector<SweepRow> sweep_r(std::span<const int> r_values, const EtaModelConfig& model_cfg,
                              const TrainConfig& cfg, const Splits& data, std::int64_t utc_offset_s = 0);

}  // namespace frnn
