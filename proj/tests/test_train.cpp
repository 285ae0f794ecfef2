// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fusionrnn/baselines.hpp"
#include "fusionrnn/error.hpp"
#include "fusionrnn/ops.hpp"
#include "fusionrnn/train.hpp"

using namespace frnn;

namespace {

const Splits& small_splits() {
  static const Splits splits = [] {
    GeneratorConfig g;
    g.num_links = 200;
    g.num_drivers = 10;
    g.trips_per_day = 10;
    return split_by_weeks(preprocess_filter(generate_dataset(g)));
  }();
  return splits;
}

EtaModelConfig small_model(EncoderKind enc = EncoderKind::fusion) {
  EtaModelConfig c = toy_model_config(enc);
  c.num_links = 200;
  c.num_drivers = 10;
  c.rnn_hidden = 8;
  c.regressor_hidden = 8;
  return c;
}

TrainConfig short_run(std::int64_t steps) {
  TrainConfig t;
  t.max_steps = steps;
  t.batch_size = 32;
  t.eval_every = 50;
  t.lr = 5e-3;
  return t;
}

double mean_predictor_mape(const Splits& s, const std::vector<TripRecord>& on) {
  const ConstantMeanPredictor mean(s.train);
  std::vector<double> y, p;
  for (const auto& t : on) {
    y.push_back(t.y_seconds);
    p.push_back(mean.predict(t));
  }
  return mape(y, p);
}

// tanh whose backward pass has the wrong sign.
Var corrupted_tanh(Var a) {
  return a.tape()->record(tanh_map(a.value()), {a}, [a](Tape& tp, const Matrix& g, const Matrix& y) {
    Matrix* da = tp.grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] -= g[i] * (1.0 - y[i] * y[i]);
  });
}

}  // namespace

TEST_CASE("adam against a scalar hand computation") {
  Matrix p = Matrix::column({1.0}), g = Matrix::column({0.5});
  Matrix* params[] = {&p};
  const Matrix* grads[] = {&g};
  AdamState s;
  adam_step(params, grads, s);
  CHECK(p[0] == doctest::Approx(0.999800000004).epsilon(1e-15));
  CHECK(s.step == 1);
  g[0] = -0.25;
  adam_step(params, grads, s);
  CHECK(p[0] == doctest::Approx(0.9997467325974158).epsilon(1e-15));

  // The first step moves each coordinate by about lr, whatever the gradient scale.
  Matrix q = Matrix::column({0.0, 0.0}), gq = Matrix::column({1e3, -1e-3});
  Matrix* qp[] = {&q};
  const Matrix* qg[] = {&gq};
  AdamState s2;
  adam_step(qp, qg, s2);
  CHECK(q[0] == doctest::Approx(-2e-4).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(2e-4).epsilon(1e-4));
}

TEST_CASE("adam with zero gradients leaves parameters untouched") {
  Matrix p = Matrix::from_rows({{1.5, -2.0}, {0.25, 3.0}});
  const Matrix before = p;
  Matrix g(2, 2);
  Matrix* params[] = {&p};
  const Matrix* grads[] = {&g};
  AdamState s;
  for (int k = 0; k < 5; ++k) adam_step(params, grads, s);
  CHECK(p == before);

  Matrix wrong(3, 1);
  const Matrix* bad[] = {&wrong};
  CHECK_THROWS_AS(adam_step(params, bad, s), ShapeError);
}

TEST_CASE("global norm clipping") {
  Parameter a("a", Matrix(1, 1)), b("b", Matrix(1, 1));
  a.grad = Matrix::column({3.0});
  b.grad = Matrix::column({4.0});
  Parameter* ps[] = {&a, &b};
  CHECK(clip_grad_norm(ps, 0.0) == 5.0);
  CHECK(a.grad[0] == 3.0);
  CHECK(clip_grad_norm(ps, 10.0) == 5.0);
  CHECK(b.grad[0] == 4.0);
  CHECK(clip_grad_norm(ps, 1.0) == 5.0);
  CHECK(a.grad[0] == doctest::Approx(0.6));
  CHECK(b.grad[0] == doctest::Approx(0.8));
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK(t.batch_size == 256);
  CHECK(t.lr == 2e-4);
  CHECK(t.patience == 10);
  CHECK(t.clip_norm == 5.0);
  CHECK_NOTHROW(t.validate());
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.lr = -1;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.eval_every = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("training lowers the loss and lr = 0 keeps the initialisation") {
  const Splits& s = small_splits();
  auto cfg = short_run(200);
  cfg.sequential = true;
  const TrainResult trained = train(small_model(), cfg, s);

  cfg.lr = 0.0;
  const TrainResult frozen = train(small_model(), cfg, s);
  EtaModelConfig mc = small_model();
  mc.output_scale = frozen.model.config().output_scale;
  Rng init = Rng(cfg.seed).fork(1);
  const EtaModel initial(mc, init);
  const auto a = frozen.model.parameters(), b = initial.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);

  const double before = evaluate(frozen.model, s.train).mape;
  const double after = evaluate(trained.model, s.train).mape;
  CHECK(after < before);
  CHECK(trained.best_val.mape < frozen.best_val.mape);
}

TEST_CASE("training history and report") {
  const Splits& s = small_splits();
  std::ostringstream log;
  const TrainResult r = train(small_model(EncoderKind::gru), short_run(120), s, &log);
  // val at 0; train and val at 50, 100 and 120; one test record
  REQUIRE(r.history.size() == 8);
  CHECK(r.history.front().split == "val");
  CHECK(r.history.front().step == 0);
  CHECK(r.history[1].split == "train");
  CHECK(r.history[5].step == 120);
  CHECK(r.history.back().split == "test");
  CHECK(r.history.back().step == r.best_step);
  CHECK(r.steps_run == 120);
  REQUIRE(r.test.has_value());
  CHECK(r.test->mape == evaluate(r.model, s.test).mape);

  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const Json j = Json::parse(line);
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"step", "split", "mape", "mae", "rmse", "wall_seconds"});
    ++n;
  }
  CHECK(n == r.history.size());
  const Json report = r.report_json(short_run(120));
  CHECK(report["best_step"] == r.best_step);
}

TEST_CASE("early stopping after patience evaluations") {
  const Splits& s = small_splits();
  auto cfg = short_run(1000);
  cfg.lr = 0.0;
  cfg.eval_every = 10;
  cfg.patience = 3;
  const TrainResult r = train(small_model(EncoderKind::elman), cfg, s);
  CHECK(r.early_stopped);
  CHECK(r.steps_run == 30);
  CHECK(r.best_step == 0);
}

TEST_CASE("sequential training replays bit for bit") {
  const Splits& s = small_splits();
  auto cfg = short_run(60);
  cfg.sequential = true;
  std::ostringstream a, b;
  train(small_model(EncoderKind::lstm), cfg, s, &a);
  train(small_model(EncoderKind::lstm), cfg, s, &b);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("\"wall_seconds\":0") != std::string::npos);
}

TEST_CASE("evaluation is pure and rejects empty splits") {
  const Splits& s = small_splits();
  Rng rng(3);
  EtaModelConfig mc = small_model();
  mc.output_scale = 400;
  const EtaModel model(mc, rng);
  const MetricsReport a = evaluate(model, s.val), b = evaluate(model, s.val);
  CHECK(a.mape == b.mape);
  CHECK(a.rmse == b.rmse);
  CHECK(a.n == s.val.size());
  CHECK(evaluate(model, s.val, 7).mape == doctest::Approx(a.mape).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(model, std::span<const TripRecord>{}), DomainError);

  Splits empty_val = s;
  empty_val.val.clear();
  CHECK_THROWS_AS(train(small_model(), short_run(5), empty_val), DomainError);
}

TEST_CASE("gradient checker") {
  for (int r = 0; r <= 3; ++r) CHECK(gradcheck_cell(CellKind::fusion, r, 1e-5).passed);
  for (auto k : {CellKind::elman, CellKind::gru, CellKind::lstm}) CHECK(gradcheck_cell(k, 0, 1e-5).passed);
  const GradcheckReport ffn = gradcheck_model(EncoderKind::ffn, 0, 1e-6);
  CHECK(ffn.passed);
  CHECK(ffn.max_rel_error < 1e-6);
  CHECK(ffn.tensors.size() == EtaModel::zeros(toy_model_config(EncoderKind::ffn)).parameters().size());

  Parameter w("w", Matrix::column({0.3, -0.7, 1.1}));
  Parameter* ps[] = {&w};
  const GradcheckReport good = gradcheck(ps, [&](Tape& t) { return ad::sum(ad::tanh(t.parameter(w))); }, 1e-5);
  CHECK(good.passed);
  const GradcheckReport bad = gradcheck(ps, [&](Tape& t) { return ad::sum(corrupted_tanh(t.parameter(w))); }, 1e-5);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_rel_error > 1.0);
  CHECK(bad.to_json()["passed"] == false);
}

TEST_CASE("fusion rounds sweep") {
  const Splits& s = small_splits();
  const int rs[] = {1, 2, 3, 4, 5};
  const auto rows = sweep_r(rs, small_model(), short_run(150), s);
  REQUIRE(rows.size() == 5);
  const double mean_mape = mean_predictor_mape(s, s.val);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].rounds == rs[i]);
    CHECK(rows[i].val.mape < mean_mape);
    const Json j = Json::parse(rows[i].to_json_line());
    CHECK(j["rounds"] == rs[i]);
    CHECK(j["val"].contains("mape"));
    CHECK(j["test"].contains("mape"));
  }
  CHECK(rows[4].parameters == rows[0].parameters);
  CHECK_THROWS_AS(sweep_r({}, small_model(), short_run(5), s), ValidationError);
}
