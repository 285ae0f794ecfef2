// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "fusionrnn/error.hpp"
#include "fusionrnn/kernels.hpp"

namespace frnn {

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!params[i]->same_shape(*grads[i]))
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " is " + params[i]->shape_string() +
                       " but its gradient is " + grads[i]->shape_string());
  if (state.m.empty() && state.v.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: moment count does not match the parameter count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!state.m[i].same_shape(*params[i]) || !state.v[i].same_shape(*params[i]))
      throw ShapeError("adam_step: moment shape mismatch for parameter " + std::to_string(i));

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const double* g = grads[i]->data();
    double* m = state.m[i].data();
    double* v = state.v[i].data();
    for (std::size_t k = 0, len = params[i]->size(); k < len; ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  std::vector<Matrix*> values;
  std::vector<const Matrix*> grads;
  for (Parameter* p : params) {
    if (!p->grad.same_shape(p->value)) p->zero_grad();
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(values, grads, state);
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm && std::isfinite(norm)) {
    const double s = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.values()) g *= s;
  }
  return norm;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("train config: " + msg); };
  if (max_steps < 0) fail("max_steps must be >= 0");
  if (batch_size < 1 || eval_batch_size < 1) fail("batch sizes must be >= 1");
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be a finite value >= 0");
  if (!(clip_norm >= 0.0)) fail("clip_norm must be >= 0");
  if (threads < 0) fail("threads must be >= 0");
}

std::string LogRecord::to_json_line() const {
  Json j;
  j["step"] = step;
  j["split"] = split;
  j["mape"] = metrics.mape;
  j["mae"] = metrics.mae;
  j["rmse"] = metrics.rmse;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

Json TrainResult::report_json(const TrainConfig& cfg) const {
  Json j;
  j["event"] = "train_report";
  j["encoder"] = std::string(to_string(model.config().encoder));
  j["rounds"] = model.config().rounds;
  j["parameters"] = model.parameter_count();
  j["steps_run"] = steps_run;
  j["max_steps"] = cfg.max_steps;
  j["best_step"] = best_step;
  j["early_stopped"] = early_stopped;
  j["best_val"] = best_val.to_json();
  j["test"] = test ? test->to_json() : Json(nullptr);
  j["model"] = model.config().to_json();
  return j;
}

std::vector<double> predict_all(const EtaModel& model, std::span<const TripRecord> records, std::size_t batch_size,
                                std::int64_t utc_offset_s) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  std::vector<double> out;
  out.reserve(records.size());
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const auto chunk = records.subspan(start, std::min(batch_size, records.size() - start));
    const auto preds = model.predict(make_batch(chunk, utc_offset_s));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

MetricsReport evaluate(const EtaModel& model, std::span<const TripRecord> records, std::size_t batch_size,
                       std::int64_t utc_offset_s) {
  if (records.empty()) throw DomainError("evaluate: the split is empty");
  const auto preds = predict_all(model, records, batch_size, utc_offset_s);
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.y_seconds);
  return compute_metrics(y, preds);
}

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(bool frozen) : frozen_(frozen), start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    if (frozen_) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool frozen_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

TrainResult train(const EtaModelConfig& model_cfg, const TrainConfig& cfg, const Splits& data, std::ostream* log,
                  std::int64_t utc_offset_s) {
  cfg.validate();
  model_cfg.validate();
  if (data.train.empty()) throw DomainError("train: the training split is empty");
  if (data.val.empty()) throw DomainError("train: the validation split is empty");
  if (cfg.sequential)
    kernels::set_threads(1);
  else if (cfg.threads > 0)
    kernels::set_threads(cfg.threads);

  EtaModelConfig mc = model_cfg;
  if (cfg.scale_output_to_data) {
    double total = 0.0;
    for (const auto& t : data.train) total += t.y_seconds;
    // softplus(0) then maps to the mean training time.
    mc.output_scale = total / static_cast<double>(data.train.size()) / std::log(2.0);
  }

  Rng init_rng = Rng(cfg.seed).fork(1);
  EtaModel model(mc, init_rng);
  EtaModel best = model;
  BatchStream stream(data.train, cfg.batch_size, Rng(cfg.seed).fork(2), utc_offset_s);
  AdamState adam;
  adam.lr = cfg.lr;
  auto params = model.parameters();

  TrainResult result{model, {}, {}, 0, 0, false, std::nullopt};
  const Stopwatch clock(cfg.sequential);
  auto emit = [&](LogRecord rec) {
    if (log) *log << rec.to_json_line() << '\n' << std::flush;
    result.history.push_back(std::move(rec));
  };

  double best_mape = std::numeric_limits<double>::infinity();
  int stale = 0;
  auto validate_now = [&](std::int64_t step) {
    const MetricsReport val = evaluate(model, data.val, cfg.eval_batch_size, utc_offset_s);
    emit({step, "val", val, clock.seconds()});
    if (val.mape < best_mape) {
      best_mape = val.mape;
      best = model;
      result.best_val = val;
      result.best_step = step;
      stale = 0;
    } else {
      ++stale;
    }
  };

  validate_now(0);
  std::vector<double> window_y, window_pred;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    const Batch batch = stream.next();
    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    const Var pred = model.forward(tape, batch, true);
    const Var loss = ad::mape_loss(pred, batch.targets);
    if (!std::isfinite(loss.value()[0]))
      throw DivergenceError("training loss became non-finite at step " + std::to_string(step));
    tape.backward(loss);
    const double norm = clip_grad_norm(params, cfg.clip_norm);
    if (!std::isfinite(norm))
      throw DivergenceError("gradient norm became non-finite at step " + std::to_string(step));
    adam_step(params, adam);
    result.steps_run = step;

    window_y.insert(window_y.end(), batch.targets.begin(), batch.targets.end());
    const auto& pv = pred.value().values();
    window_pred.insert(window_pred.end(), pv.begin(), pv.end());

    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      emit({step, "train", compute_metrics(window_y, window_pred), clock.seconds()});
      window_y.clear();
      window_pred.clear();
      validate_now(step);
      if (stale >= cfg.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }

  if (!data.test.empty()) {
    result.test = evaluate(best, data.test, cfg.eval_batch_size, utc_offset_s);
    emit({result.best_step, "test", *result.test, clock.seconds()});
  }
  result.model = std::move(best);
  return result;
}

// ---------------------------------------------------------------------------

Json GradcheckReport::to_json() const {
  Json j;
  j["event"] = "gradcheck";
  j["variant"] = variant;
  j["tolerance"] = tolerance;
  j["max_rel_error"] = max_rel_error;
  j["passed"] = passed;
  Json per = Json::array();
  for (const auto& t : tensors)
    per.push_back({{"name", t.name}, {"entries", t.entries}, {"max_abs_error", t.max_abs_error},
                   {"max_rel_error", t.max_rel_error}});
  j["tensors"] = per;
  return j;
}

GradcheckReport gradcheck(std::span<Parameter* const> params, const LossBuilder& loss, double tolerance,
                          double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    const Var out = loss(tape);
    tape.backward(out);
  }
  auto value_at = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };

  GradcheckReport report;
  report.tolerance = tolerance;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    Matrix numeric(p->value.rows(), p->value.cols());
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double saved = p->value[k];
      p->value[k] = saved + step;
      const double up = value_at();
      p->value[k] = saved - step;
      const double down = value_at();
      p->value[k] = saved;
      numeric[k] = (up - down) / (2.0 * step);
    }
    TensorCheck tc;
    tc.name = p->name;
    tc.entries = p->value.size();
    double scale = 1e-12;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(analytic[k] - numeric[k]));
    }
    tc.max_rel_error = tc.max_abs_error / scale;
    if (!std::isfinite(tc.max_rel_error)) tc.max_rel_error = std::numeric_limits<double>::infinity();
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.tensors.push_back(std::move(tc));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace

GradcheckReport gradcheck_cell(CellKind kind, int rounds, double tolerance, std::uint64_t seed, std::size_t m,
                               std::size_t n, std::size_t seq_len) {
  constexpr std::size_t kColumns = 3;
  Rng rng(seed);
  CellParams params = init_params(kind, m, n, rounds, rng);
  // Non-zero biases so every bias gradient path is exercised.
  for (Parameter* p : tensors(params))
    if (p->value.cols() == 1)
      for (double& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
  std::vector<Matrix> xs, wh, wc;
  for (std::size_t t = 0; t < seq_len; ++t) {
    xs.push_back(random_matrix(m, kColumns, rng));
    wh.push_back(random_matrix(n, kColumns, rng));
    wc.push_back(random_matrix(n, kColumns, rng));
  }
  const Matrix h0 = random_matrix(n, kColumns, rng, -0.5, 0.5);
  const Matrix c0 = random_matrix(n, kColumns, rng, -0.5, 0.5);

  auto loss = [&](Tape& tape) {
    BoundCell cell(tape, params, true);
    CellState state{tape.constant(h0), cell.has_cell_state() ? tape.constant(c0) : Var{}};
    Var total;
    for (std::size_t t = 0; t < seq_len; ++t) {
      state = cell.step(tape.constant(xs[t]), state);
      Var term = ad::sum(ad::mul(state.h, tape.constant(wh[t])));
      if (cell.has_cell_state()) term = ad::add(term, ad::sum(ad::mul(state.c, tape.constant(wc[t]))));
      total = total.valid() ? ad::add(total, term) : term;
    }
    return total;
  };
  auto report = gradcheck(tensors(params), loss, tolerance);
  report.variant = std::string(to_string(kind));
  if (kind == CellKind::fusion) report.variant += " r=" + std::to_string(rounds);
  return report;
}

EtaModelConfig toy_model_config(EncoderKind encoder, int rounds) {
  EtaModelConfig c;
  c.num_links = 12;
  c.num_drivers = 4;
  c.link_embed_dim = 4;
  c.driver_embed_dim = 3;
  c.timeslice_embed_dim = 2;
  c.weekday_embed_dim = 2;
  c.mlp_hidden_sizes = {8, 6};
  c.encoder = encoder;
  c.rnn_hidden = 5;
  c.regressor_hidden = 7;
  c.rounds = rounds;
  c.output_scale = 1.0;
  return c;
}

GradcheckReport gradcheck_model(EncoderKind encoder, int rounds, double tolerance, std::uint64_t seed) {
  Rng rng(seed);
  EtaModel model(toy_model_config(encoder, rounds), rng);
  for (Parameter* p : model.parameters())
    if (p->value.cols() == 1)
      for (double& v : p->value.values()) v = rng.uniform(-0.3, 0.3);

  std::vector<TripRecord> trips;
  const std::size_t lengths[] = {3, 1, 5, 2, 3};
  for (std::size_t i = 0; i < std::size(lengths); ++i) {
    TripRecord t;
    t.trip_id = "G" + std::to_string(i);
    t.driver_id = static_cast<std::int64_t>(rng.below(4));
    t.depart_ts = 1514764800 + static_cast<std::int64_t>(rng.below(7 * 86400));
    for (std::size_t k = 0; k < lengths[i]; ++k)
      t.links.push_back({static_cast<std::int64_t>(rng.below(12)), rng.uniform(50, 800), rng.uniform(4, 16),
                         rng.uniform(0, 20)});
    t.y_seconds = 1.0;
    trips.push_back(std::move(t));
  }
  Batch batch = make_batch(trips);
  // Targets at half the initial predictions keep every term of the loss far
  // from its kink while leaving gradients of order one.
  const auto initial = model.predict(batch);
  for (std::size_t i = 0; i < batch.size; ++i) batch.targets[i] = 0.5 * initial[i];

  auto loss = [&](Tape& tape) { return ad::mape_loss(model.forward(tape, batch, true), batch.targets); };
  auto report = gradcheck(model.parameters(), loss, tolerance);
  report.variant = "eta-" + std::string(to_string(encoder));
  if (encoder == EncoderKind::fusion) report.variant += " r=" + std::to_string(rounds);
  return report;
}

// ---------------------------------------------------------------------------

std::string SweepRow::to_json_line() const {
  Json j;
  j["rounds"] = rounds;
  j["parameters"] = parameters;
  j["best_step"] = best_step;
  j["val"] = val.to_json();
  j["test"] = test.to_json();
  return j.dump();
}

std::vector<SweepRow> sweep_r(std::span<const int> r_values, const EtaModelConfig& model_cfg,
                              const TrainConfig& cfg, const Splits& data, std::int64_t utc_offset_s) {
  if (r_values.empty()) throw ValidationError("sweep_r: no values of r given");
  if (data.test.empty()) throw DomainError("sweep_r: the test split is empty");
  std::vector<SweepRow> rows;
  for (int r : r_values) {
    EtaModelConfig mc = model_cfg;
    mc.encoder = EncoderKind::fusion;
    mc.rounds = r;
    mc.validate();
    TrainResult res = train(mc, cfg, data, nullptr, utc_offset_s);
    rows.push_back({r, res.best_val, *res.test, res.best_step, res.model.parameter_count()});
  }
  return rows;
}

}  // namespace frnn
