// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <utility>

#include "doctest.h"
#include "fusionrnn/cells.hpp"
#include "fusionrnn/counts.hpp"
#include "fusionrnn/error.hpp"
#include "fusionrnn/ops.hpp"
#include "fusionrnn/tensor_io.hpp"
#include "fusionrnn/train.hpp"
#include "support.hpp"

using namespace frnn;
using testing::random_matrix;

namespace {

FusionCellParams scalar_fusion(int rounds) {
  auto p = std::get<FusionCellParams>(zero_params(CellKind::fusion, 1, 1, rounds));
  p.fx.value.fill(1.0);
  p.fh.value.fill(1.0);
  p.wx.value.fill(1.0);
  p.wh.value.fill(1.0);
  return p;
}

// Small fixed weights shared with the numpy oracle that produced the frozen
// values below (m = 2, n = 3).
const Matrix kWx = Matrix::from_rows({{0.1, -0.2}, {0.3, 0.4}, {-0.5, 0.6}});
const Matrix kWh = Matrix::from_rows({{0.2, 0.1, -0.1}, {0.0, -0.3, 0.2}, {0.4, 0.1, 0.05}});
const Matrix kB = Matrix::column({0.1, -0.1, 0.2});
const Matrix kFx = Matrix::from_rows({{0.5, -0.4, 0.3}, {0.2, 0.1, -0.6}});
const Matrix kFh = Matrix::from_rows({{0.3, -0.2}, {0.7, 0.1}, {-0.4, 0.5}});
const Matrix kX = Matrix::column({0.9, -0.7});
const Matrix kH = Matrix::column({0.3, -0.5, 0.8});

void check_close(const Matrix& got, std::initializer_list<double> want, double tol = 1e-14) {
  REQUIRE(got.size() == want.size());
  std::size_t i = 0;
  for (double w : want) CHECK(std::abs(got[i++] - w) < tol);
}

}  // namespace

TEST_CASE("fusion module boundary cases") {
  Rng rng(1);
  auto p = std::get<FusionCellParams>(init_params(CellKind::fusion, 4, 3, 0, rng));
  const Matrix x = random_matrix(4, 1, rng), h = random_matrix(3, 1, rng);
  const FusedPair same = fusion_module(x, h, p);
  CHECK(same.x_fused == x);
  CHECK(same.h_fused == h);

  p.rounds = 1;
  const FusedPair annihilated = fusion_module(x, Matrix(3, 1), p);
  CHECK(annihilated.x_fused == Matrix(4, 1));
  CHECK(annihilated.h_fused == Matrix(3, 1));

  p.b.value = random_matrix(3, 1, rng);
  CHECK(fusion_cell_step(x, Matrix(3, 1), p) == tanh_map(p.b.value));

  for (int r = 0; r <= 6; ++r) {
    p.rounds = r;
    const FusedPair out = fusion_module(x, h, p);
    CHECK(out.x_fused.rows() == 4);
    CHECK(out.h_fused.rows() == 3);
  }
  CHECK_THROWS_AS(fusion_module(Matrix(3, 1), h, p), ShapeError);
}

TEST_CASE("fusion scalar oracle") {
  const auto p = scalar_fusion(2);
  const FusedPair out = fusion_module(Matrix::column({1}), Matrix::column({1}), p);
  CHECK(out.x_fused[0] == doctest::Approx(0.7615941559557649).epsilon(1e-14));
  CHECK(out.h_fused[0] == doctest::Approx(0.6420149920119997).epsilon(1e-14));
  auto step = p;
  step.b.value.fill(0.0);
  CHECK(fusion_cell_step(Matrix::column({1}), Matrix::column({1}), step)[0] ==
        doctest::Approx(0.8861292861966845).epsilon(1e-14));

  auto transport = scalar_fusion(0);
  CHECK(transport_module(Matrix::column({0.5}), Matrix::column({0.5}), transport)[0] ==
        doctest::Approx(0.7615941559557649).epsilon(1e-14));
}

TEST_CASE("cells against frozen numpy oracle") {
  for (int r = 0; r <= 3; ++r) {
    auto p = std::get<FusionCellParams>(zero_params(CellKind::fusion, 2, 3, r));
    p.fx.value = kFx;
    p.fh.value = kFh;
    p.wx.value = kWx;
    p.wh.value = kWh;
    p.b.value = kB;
    const Matrix h = fusion_cell_step(kX, kH, p);
    if (r == 0) check_close(h, {0.25429553262639115, 0.19737532022490403, -0.5079774328978962});
    if (r == 1) check_close(h, {0.016341245799109207, 0.4428476464651334, 0.25016675223231394});
    if (r == 2) check_close(h, {0.07661588691701154, 0.20903725561140435, 0.13558177675177227});
    if (r == 3) check_close(h, {0.0933016527566687, -0.04247877533839593, 0.17267337989799753});
  }

  auto g = std::get<GruCellParams>(zero_params(CellKind::gru, 2, 3));
  g.wr.value = kWx, g.ur.value = kWh, g.br.value = kB;
  g.wz.value = scale(kWx, -1), g.uz.value = scale(kWh, 0.5), g.bz.value = scale(kB, -1);
  g.wc.value = scale(kWx, 0.5), g.uc.value = scale(kWh, -1), g.bc.value = scale(kB, 2);
  check_close(gru_cell_step(kX, kH, g), {0.31500422577167475, -0.42728482461870465, 0.5097409643996031});

  auto l = std::get<LstmCellParams>(zero_params(CellKind::lstm, 2, 3));
  l.wi.value = kWx, l.ui.value = kWh, l.bi.value = kB;
  l.wf.value = scale(kWx, -1), l.uf.value = scale(kWh, 0.5), l.bf.value = scale(kB, -1);
  l.wo.value = scale(kWx, 0.5), l.uo.value = scale(kWh, -1), l.bo.value = scale(kB, 2);
  l.wg.value = scale(kWx, 2), l.ug.value = transpose(kWh), l.bg.value = scale(kB, -0.5);
  const LstmState s = lstm_cell_step(kX, kH, Matrix::column({0.5, -0.2, 0.1}), l);
  check_close(s.h, {0.30956962869271837, 0.01568264110864683, -0.12708099376424364});
  check_close(s.c, {0.5766365105862885, 0.04195431125205573, -0.2811743841880673});
}

TEST_CASE("zero-parameter cells") {
  Rng rng(2);
  const Matrix x = random_matrix(4, 1, rng), h = random_matrix(3, 1, rng);
  const auto e = std::get<ElmanCellParams>(zero_params(CellKind::elman, 4, 3));
  CHECK(elman_cell_step(x, h, e) == Matrix(3, 1));
  const auto g = std::get<GruCellParams>(zero_params(CellKind::gru, 4, 3));
  const Matrix hg = gru_cell_step(x, h, g);
  for (std::size_t i = 0; i < 3; ++i) CHECK(hg[i] == 0.5 * h[i]);
  const auto l = std::get<LstmCellParams>(zero_params(CellKind::lstm, 4, 3));
  CHECK(lstm_cell_step(x, h, Matrix(3, 1), l).h == Matrix(3, 1));
  const auto f = std::get<FusionCellParams>(zero_params(CellKind::fusion, 4, 3, 2));
  CHECK(transport_module(x, h, f) == Matrix(3, 1));
}

TEST_CASE("fusion with r = 0 is the Elman cell, bit for bit") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = std::get<FusionCellParams>(init_params(CellKind::fusion, 5, 4, 0, rng));
    f.b.value = random_matrix(4, 1, rng);
    ElmanCellParams e{5, 4, f.wx, f.wh, f.b};
    const Matrix x = random_matrix(5, 1, rng), h = random_matrix(4, 1, rng);
    CHECK(fusion_cell_step(x, h, f) == elman_cell_step(x, h, e));
  }
}

TEST_CASE("tanh outputs stay in range") {
  Rng rng(4);
  for (auto kind : {CellKind::fusion, CellKind::elman}) {
    const CellParams p = init_params(kind, 3, 3, 3, rng);
    const Matrix x = random_matrix(3, 1, rng, -100, 100), h = random_matrix(3, 1, rng, -1, 1);
    const Matrix out = kind == CellKind::fusion ? fusion_cell_step(x, h, std::get<FusionCellParams>(p))
                                                : elman_cell_step(x, h, std::get<ElmanCellParams>(p));
    for (double v : out.values()) CHECK(std::abs(v) <= 1.0);
  }
}

TEST_CASE("init_params") {
  Rng a(7), b(7);
  const CellParams pa = init_params(CellKind::lstm, 6, 5, 0, a);
  const CellParams pb = init_params(CellKind::lstm, 6, 5, 0, b);
  auto ta = tensors(pa), tb = tensors(pb);
  REQUIRE(ta.size() == 12);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i]->value == tb[i]->value);
    if (ta[i]->value.cols() == 1)
      for (double v : ta[i]->value.values()) CHECK(v == 0.0);
  }
  for (const Parameter* t : tensors(pa)) {
    if (t->value.cols() == 1) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(t->value.rows() + t->value.cols()));
    for (double v : t->value.values()) CHECK(std::abs(v) <= limit);
  }

  Rng c(8);
  const auto big = std::get<ElmanCellParams>(init_params(CellKind::elman, 128, 128, 0, c));
  double mean = 0;
  for (double v : big.wh.value.values()) mean += v;
  mean /= static_cast<double>(big.wh.value.size());
  CHECK(std::abs(mean) < 0.02);

  CHECK_THROWS_AS(init_params(CellKind::fusion, 2, 2, 17, c), ValidationError);
  CHECK_THROWS_AS(init_params(CellKind::fusion, 2, 2, -1, c), ValidationError);
}

TEST_CASE("closed-form counts") {
  CHECK(param_count(CellKind::fusion, 16, 32) == 2592);
  CHECK(param_count(CellKind::lstm, 128, 128) == 131584);
  CHECK(param_count(CellKind::fusion, 128, 128, 2) == 65664);
  CHECK(mult_count(CellKind::fusion, 4, 4, 3) == 92);
  CHECK(mult_count(CellKind::lstm, 4, 4) == 140);
  CHECK(mult_count(CellKind::fusion, 2, 3, 1) == 23);
  CHECK(mult_count(CellKind::gru, 3, 5, 0, 7) == 7 * (45 + 75 + 15));
  CHECK(param_polynomial(CellKind::fusion).to_string_equal_sizes() == "4n²+n");
  CHECK(param_polynomial(CellKind::gru).to_string_equal_sizes() == "6n²+3n");
  CHECK(param_polynomial(CellKind::lstm).to_string_equal_sizes() == "8n²+4n");
  CHECK(param_polynomial(CellKind::elman).to_string_equal_sizes() == "2n²+n");
  CHECK(mult_polynomial(CellKind::lstm, 0).to_string_equal_sizes() == "8n²+3n");
  CHECK(mult_polynomial(CellKind::fusion, 3).to_string_equal_sizes() == "5n²+3n");
  CHECK_THROWS_AS(param_count(CellKind::gru, 0, 4), ValidationError);
}

TEST_CASE("parameter ordering at equal sizes") {
  for (std::uint64_t n = 1; n <= 256; ++n) {
    CHECK(param_count(CellKind::fusion, n, n) < param_count(CellKind::gru, n, n));
    CHECK(param_count(CellKind::gru, n, n) < param_count(CellKind::lstm, n, n));
  }
}

TEST_CASE("closed form agrees with enumeration and instrumentation") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = 1 + rng.below(40), n = 1 + rng.below(40);
    const int r = static_cast<int>(rng.below(6));
    for (auto kind : {CellKind::fusion, CellKind::elman, CellKind::gru, CellKind::lstm}) {
      const CellParams p = init_params(kind, m, n, r, rng);
      CHECK(param_count(kind, m, n, r) == enumerate_parameters(p));
      CHECK(mult_count(kind, m, n, r) == instrumented_step_multiplications(p));
    }
  }
}

TEST_CASE("fusion odd and even rounds multiply different vectors") {
  // Odd rounds touch the m-vector, even rounds the n-vector.
  Rng rng(10);
  for (int r = 0; r <= 5; ++r) {
    const CellParams p = init_params(CellKind::fusion, 2, 7, r, rng);
    const std::uint64_t expected = 49 + static_cast<std::uint64_t>(1 + r) * 14 + static_cast<std::uint64_t>(r / 2) * 7 +
                                   static_cast<std::uint64_t>((r + 1) / 2) * 2;
    CHECK(instrumented_step_multiplications(p) == expected);
  }
}

TEST_CASE("cell gradients through time") {
  for (int r = 0; r <= 3; ++r) CHECK(gradcheck_cell(CellKind::fusion, r, 1e-5).passed);
  CHECK(gradcheck_cell(CellKind::elman, 0, 1e-5).passed);
  CHECK(gradcheck_cell(CellKind::gru, 0, 1e-5).passed);
  CHECK(gradcheck_cell(CellKind::lstm, 0, 1e-5).passed);
}

TEST_CASE("batched tape step equals per-column eager steps") {
  Rng rng(11);
  CellParams p = init_params(CellKind::gru, 3, 4, 0, rng);
  const Matrix x = random_matrix(3, 5, rng), h = random_matrix(4, 5, rng);
  Tape tape;
  BoundCell cell(tape, std::as_const(p));
  const CellState next = cell.step(tape.constant(x), {tape.constant(h), {}});
  for (std::size_t c = 0; c < 5; ++c) {
    Matrix xc(3, 1), hc(4, 1);
    for (std::size_t i = 0; i < 3; ++i) xc[i] = x(i, c);
    for (std::size_t i = 0; i < 4; ++i) hc[i] = h(i, c);
    const Matrix one = gru_cell_step(xc, hc, std::get<GruCellParams>(p));
    for (std::size_t i = 0; i < 4; ++i) CHECK(next.h.value()(i, c) == doctest::Approx(one[i]).epsilon(1e-14));
  }
}

TEST_CASE("cell parameter files round-trip exactly") {
  Rng rng(12);
  const CellParams p = init_params(CellKind::fusion, 3, 4, 3, rng);
  const auto path = std::filesystem::temp_directory_path() / "fusionrnn_cell_roundtrip.json";
  save_cell_params(path, p);
  const CellParams q = load_cell_params(path);
  CHECK(kind_of(q) == CellKind::fusion);
  CHECK(std::get<FusionCellParams>(q).rounds == 3);
  auto tp = tensors(p), tq = tensors(q);
  REQUIRE(tp.size() == tq.size());
  for (std::size_t i = 0; i < tp.size(); ++i) {
    CHECK(tp[i]->name == tq[i]->name);
    CHECK(tp[i]->value == tq[i]->value);
  }
  std::filesystem::remove(path);

  Json broken = cell_to_json(p);
  broken["tensors"].erase("Fx");
  CHECK_THROWS_AS(cell_from_json(broken), ValidationError);
}
