// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/eta_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionrnn/error.hpp"

namespace frnn {
namespace {

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (double& v : w.values()) v = rng.uniform(-limit, limit);
  return w;
}

Var bind(Tape& tape, Parameter& p, bool trainable) {
  return trainable ? tape.parameter(p) : tape.constant(p.value);
}

}  // namespace

std::string_view to_string(EncoderKind kind) noexcept {
  switch (kind) {
    case EncoderKind::fusion: return "fusion";
    case EncoderKind::elman: return "elman";
    case EncoderKind::gru: return "gru";
    case EncoderKind::lstm: return "lstm";
    case EncoderKind::ffn: return "ffn";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view name) {
  if (name == "ffn") return EncoderKind::ffn;
  switch (parse_cell_kind(name)) {
    case CellKind::fusion: return EncoderKind::fusion;
    case CellKind::elman: return EncoderKind::elman;
    case CellKind::gru: return EncoderKind::gru;
    case CellKind::lstm: return EncoderKind::lstm;
  }
  throw ValidationError("unknown encoder");
}

std::optional<CellKind> cell_kind(EncoderKind kind) noexcept {
  switch (kind) {
    case EncoderKind::fusion: return CellKind::fusion;
    case EncoderKind::elman: return CellKind::elman;
    case EncoderKind::gru: return CellKind::gru;
    case EncoderKind::lstm: return CellKind::lstm;
    case EncoderKind::ffn: return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void EtaModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("model config: " + msg); };
  if (num_links < 1 || num_drivers < 1) fail("cardinalities must be >= 1");
  if (link_embed_dim < 1 || driver_embed_dim < 1 || timeslice_embed_dim < 1 || weekday_embed_dim < 1)
    fail("embedding widths must be >= 1");
  if (mlp_hidden_sizes.empty()) fail("mlp_hidden_sizes needs at least one layer");
  for (auto s : mlp_hidden_sizes)
    if (s < 1) fail("mlp layer widths must be >= 1");
  if (rnn_hidden < 1 || regressor_hidden < 1) fail("hidden sizes must be >= 1");
  if (rounds < 0 || rounds > kMaxFusionRounds) fail("rounds must lie in [0, 16]");
  if (!(output_scale > 0.0) || !std::isfinite(output_scale)) fail("output_scale must be positive");
}

std::size_t EtaModelConfig::link_input_dim() const noexcept {
  return link_embed_dim + kLinkFeatures + driver_embed_dim + timeslice_embed_dim + weekday_embed_dim + kTripFeatures;
}

std::size_t EtaModelConfig::encoder_input_dim() const noexcept { return mlp_hidden_sizes.back(); }

Json EtaModelConfig::to_json() const {
  Json j;
  j["num_links"] = num_links;
  j["num_drivers"] = num_drivers;
  j["link_embed_dim"] = link_embed_dim;
  j["driver_embed_dim"] = driver_embed_dim;
  j["timeslice_embed_dim"] = timeslice_embed_dim;
  j["weekday_embed_dim"] = weekday_embed_dim;
  j["mlp_hidden_sizes"] = mlp_hidden_sizes;
  j["encoder"] = std::string(to_string(encoder));
  j["rnn_hidden"] = rnn_hidden;
  j["regressor_hidden"] = regressor_hidden;
  j["rounds"] = rounds;
  j["output_scale"] = output_scale;
  return j;
}

EtaModelConfig EtaModelConfig::from_json(const Json& j) {
  EtaModelConfig c;
  try {
    c.num_links = j.at("num_links").get<std::size_t>();
    c.num_drivers = j.at("num_drivers").get<std::size_t>();
    c.link_embed_dim = j.at("link_embed_dim").get<std::size_t>();
    c.driver_embed_dim = j.at("driver_embed_dim").get<std::size_t>();
    c.timeslice_embed_dim = j.at("timeslice_embed_dim").get<std::size_t>();
    c.weekday_embed_dim = j.at("weekday_embed_dim").get<std::size_t>();
    c.mlp_hidden_sizes = j.at("mlp_hidden_sizes").get<std::vector<std::size_t>>();
    c.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
    c.rnn_hidden = j.at("rnn_hidden").get<std::size_t>();
    c.regressor_hidden = j.at("regressor_hidden").get<std::size_t>();
    c.rounds = j.at("rounds").get<int>();
    c.output_scale = j.at("output_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

Matrix embed_lookup(const EmbeddingTable& table, std::size_t id) {
  if (id >= table.cardinality())
    throw IndexError("embedding id " + std::to_string(id) + " out of range for cardinality " +
                     std::to_string(table.cardinality()));
  Matrix out(table.dim(), 1);
  for (std::size_t i = 0; i < table.dim(); ++i) out[i] = table.table.value(i, id);
  return out;
}

// ---------------------------------------------------------------------------

EtaModel::EtaModel(EtaModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  allocate();
}

void EtaModel::allocate() {
  link_embed_.table = Parameter("embed.link", Matrix(cfg_.link_embed_dim, cfg_.num_links));
  driver_embed_.table = Parameter("embed.driver", Matrix(cfg_.driver_embed_dim, cfg_.num_drivers));
  slice_embed_.table = Parameter("embed.timeslice", Matrix(cfg_.timeslice_embed_dim, kTimeSlices));
  weekday_embed_.table = Parameter("embed.weekday", Matrix(cfg_.weekday_embed_dim, kWeekdays));
  mlp_w_.clear();
  mlp_b_.clear();
  std::size_t in = cfg_.link_input_dim();
  for (std::size_t i = 0; i < cfg_.mlp_hidden_sizes.size(); ++i) {
    const std::size_t out = cfg_.mlp_hidden_sizes[i];
    mlp_w_.emplace_back("mlp." + std::to_string(i) + ".W", Matrix(out, in));
    mlp_b_.emplace_back("mlp." + std::to_string(i) + ".b", Matrix(out, 1));
    in = out;
  }
  std::size_t encoded = in;
  if (auto kind = cell_kind(cfg_.encoder)) {
    cell_ = zero_params(*kind, in, cfg_.rnn_hidden, cfg_.rounds);
    for (Parameter* p : tensors(*cell_)) p->name = "rnn." + p->name;
    encoded = cfg_.rnn_hidden;
  } else {
    cell_.reset();
  }
  reg_w1_ = Parameter("reg.W1", Matrix(cfg_.regressor_hidden, encoded));
  reg_b1_ = Parameter("reg.b1", Matrix(cfg_.regressor_hidden, 1));
  reg_w2_ = Parameter("reg.W2", Matrix(1, cfg_.regressor_hidden));
  reg_b2_ = Parameter("reg.b2", Matrix(1, 1));
}

EtaModel::EtaModel(EtaModelConfig cfg, Rng& rng) : EtaModel(std::move(cfg)) {
  for (EmbeddingTable* e : {&link_embed_, &driver_embed_, &slice_embed_, &weekday_embed_})
    for (double& v : e->table.value.values()) v = rng.uniform(-0.1, 0.1);
  for (auto& w : mlp_w_) w.value = glorot(w.value.rows(), w.value.cols(), rng);
  if (cell_) {
    CellParams fresh = init_params(kind_of(*cell_), input_size(*cell_), hidden_size(*cell_), cfg_.rounds, rng);
    auto dst = tensors(*cell_);
    auto src = tensors(fresh);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = std::move(src[i]->value);
    // A zero state with a zero transport bias is a fixed point of the fusion
    // cell, so recurrent biases start small but non-zero for every encoder.
    for (Parameter* p : dst)
      if (p->value.cols() == 1)
        for (double& v : p->value.values()) v = rng.uniform(-0.1, 0.1);
  }
  reg_w1_.value = glorot(reg_w1_.value.rows(), reg_w1_.value.cols(), rng);
  reg_w2_.value = glorot(reg_w2_.value.rows(), reg_w2_.value.cols(), rng);
}

EtaModel EtaModel::zeros(EtaModelConfig cfg) { return EtaModel(std::move(cfg)); }

std::vector<Parameter*> EtaModel::parameters() {
  std::vector<Parameter*> out = {&link_embed_.table, &driver_embed_.table, &slice_embed_.table,
                                 &weekday_embed_.table};
  for (std::size_t i = 0; i < mlp_w_.size(); ++i) {
    out.push_back(&mlp_w_[i]);
    out.push_back(&mlp_b_[i]);
  }
  if (cell_)
    for (Parameter* p : tensors(*cell_)) out.push_back(p);
  for (Parameter* p : {&reg_w1_, &reg_b1_, &reg_w2_, &reg_b2_}) out.push_back(p);
  return out;
}

std::vector<const Parameter*> EtaModel::parameters() const {
  auto mut = const_cast<EtaModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t EtaModel::parameter_count() const {
  std::size_t total = 0;
  for (const Parameter* p : parameters()) total += p->value.size();
  return total;
}

// ---------------------------------------------------------------------------

Var EtaModel::forward(Tape& tape, const Batch& batch, bool trainable) {
  return forward_impl(tape, batch, trainable);
}

std::vector<double> EtaModel::predict(const Batch& batch) const {
  Tape tape;
  // Constants only: nothing on the tape can write back into the model.
  Var out = const_cast<EtaModel*>(this)->forward_impl(tape, batch, false);
  return {out.value().values().begin(), out.value().values().end()};
}

double EtaModel::forward_trip(const TripRecord& trip, std::int64_t utc_offset_s) const {
  if (trip.links.empty()) throw ValidationError("trip '" + trip.trip_id + "' has an empty link sequence");
  return predict(make_batch(std::span<const TripRecord>(&trip, 1), utc_offset_s)).front();
}

Var EtaModel::forward_impl(Tape& tape, const Batch& batch, bool trainable) {
  const std::size_t B = batch.size;
  if (B == 0) throw ValidationError("empty batch");
  for (std::size_t i = 0; i < B; ++i)
    if (batch.lengths[i] == 0) throw ValidationError("trip with an empty link sequence");

  // Longest trips first; `active[t]` trips are still running at step t.
  std::vector<std::size_t> order(B);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return batch.lengths[a] > batch.lengths[b]; });
  std::vector<std::size_t> active(batch.max_len, 0);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t t = 0; t < batch.lengths[i]; ++t) ++active[t];

  // Time-major columns: step 0 of every trip, then step 1 of the active ones...
  std::size_t columns = 0;
  for (std::size_t a : active) columns += a;
  std::vector<std::size_t> link_ids(columns), driver_ids(columns), slices(columns), days(columns), owner(columns);
  Matrix link_feats(kLinkFeatures, columns);
  Matrix trip_feats(kTripFeatures, columns);
  std::size_t col = 0;
  for (std::size_t t = 0; t < batch.max_len; ++t) {
    for (std::size_t k = 0; k < active[t]; ++k, ++col) {
      const std::size_t trip = order[k];
      link_ids[col] = batch.link_ids[trip * batch.max_len + t];
      driver_ids[col] = batch.driver_ids[trip];
      slices[col] = batch.time_slices[trip];
      days[col] = batch.weekdays[trip];
      owner[col] = k;
      for (std::size_t f = 0; f < kLinkFeatures; ++f) link_feats(f, col) = batch.link_feature(trip, t, f);
      for (std::size_t f = 0; f < kTripFeatures; ++f) trip_feats(f, col) = batch.trip_features[trip * kTripFeatures + f];
    }
  }

  const Var parts[] = {
      ad::gather_cols(bind(tape, link_embed_.table, trainable), link_ids),
      tape.constant(std::move(link_feats)),
      ad::gather_cols(bind(tape, driver_embed_.table, trainable), driver_ids),
      ad::gather_cols(bind(tape, slice_embed_.table, trainable), slices),
      ad::gather_cols(bind(tape, weekday_embed_.table, trainable), days),
      tape.constant(std::move(trip_feats)),
  };
  Var x = ad::concat_rows(parts);
  for (std::size_t i = 0; i < mlp_w_.size(); ++i)
    x = ad::relu(ad::affine(bind(tape, mlp_w_[i], trainable), x, bind(tape, mlp_b_[i], trainable)));

  Var encoded;
  if (cell_) {
    BoundCell cell(tape, *cell_, trainable);
    CellState state = cell.zero_state(B);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < batch.max_len; ++t) {
      const std::size_t a = active[t];
      const Var xt = ad::slice_cols(x, offset, a);
      offset += a;
      if (a == B) {
        state = cell.step(xt, state);
        continue;
      }
      // Finished trips keep their last hidden state.
      CellState head{ad::slice_cols(state.h, 0, a), {}};
      if (cell.has_cell_state()) head.c = ad::slice_cols(state.c, 0, a);
      CellState next = cell.step(xt, head);
      CellState merged{ad::concat_cols(next.h, ad::slice_cols(state.h, a, B - a)), {}};
      if (cell.has_cell_state()) merged.c = ad::concat_cols(next.c, ad::slice_cols(state.c, a, B - a));
      state = merged;
    }
    encoded = state.h;
  } else {
    encoded = ad::segment_mean(x, owner, B);
  }

  Var hidden = ad::relu(ad::affine(bind(tape, reg_w1_, trainable), encoded, bind(tape, reg_b1_, trainable)));
  Var out = ad::softplus(ad::affine(bind(tape, reg_w2_, trainable), hidden, bind(tape, reg_b2_, trainable)));
  if (cfg_.output_scale != 1.0) out = ad::scale(out, cfg_.output_scale);

  // Back to batch order.
  std::vector<std::size_t> position(B);
  for (std::size_t k = 0; k < B; ++k) position[order[k]] = k;
  return ad::gather_cols(out, position);
}

// ---------------------------------------------------------------------------

Json EtaModel::to_checkpoint() const {
  Json j;
  j["format"] = "fusionrnn.checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = cfg_.to_json();
  j["tensors"] = tensors_to_json(parameters());
  return j;
}

EtaModel EtaModel::from_checkpoint(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "fusionrnn.checkpoint") throw ValidationError("not a model checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    EtaModel model(EtaModelConfig::from_json(j.at("config")));
    auto params = model.parameters();
    tensors_from_json(j.at("tensors"), params);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void EtaModel::save(const std::filesystem::path& path) const { write_text_file(path, to_checkpoint().dump() + "\n"); }

EtaModel EtaModel::load(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_checkpoint(j);
}

}  // namespace frnn
