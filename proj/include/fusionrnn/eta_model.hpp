// SPDX-License-Identifier: Apache-2.0
#pragma once

// Travel-time regression network.
//
//   per link:  [link embedding | link features | driver, time-slice and
//               weekday embeddings | trip features]
//           -> shared MLP (ReLU)
//   per trip:  recurrent encoder over the link sequence, zero initial state,
//              final valid hidden state   (or masked mean pooling for ffn)
//           -> regressor MLP (ReLU) -> softplus -> * output_scale
//
// Batches are evaluated column-wise: every trip is one column, and within a
// batch the trips are ordered by decreasing length so that the active trips
// at each time step form a prefix of the columns.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "fusionrnn/cells.hpp"
#include "fusionrnn/data.hpp"
#include "fusionrnn/tape.hpp"
#include "fusionrnn/tensor_io.hpp"

namespace frnn {

enum class EncoderKind { fusion, elman, gru, lstm, ffn };

std::string_view to_string(EncoderKind kind) noexcept;
EncoderKind parse_encoder_kind(std::string_view name);
std::optional<CellKind> cell_kind(EncoderKind kind) noexcept;

struct EtaModelConfig {
  std::size_t num_links = 2000;    // link-id cardinality
  std::size_t num_drivers = 100;   // driver-id cardinality
  std::size_t link_embed_dim = 20;
  std::size_t driver_embed_dim = 8;
  std::size_t timeslice_embed_dim = 8;
  std::size_t weekday_embed_dim = 4;
  std::vector<std::size_t> mlp_hidden_sizes = {64, 64};
  EncoderKind encoder = EncoderKind::fusion;
  std::size_t rnn_hidden = 128;
  std::size_t regressor_hidden = 128;
  int rounds = 2;               // fusion iterations
  double output_scale = 1.0;    // seconds per unit of softplus output

  void validate() const;
  /// Width of the concatenated per-link vector entering the MLP.
  std::size_t link_input_dim() const noexcept;
  /// Width of the MLP output (the recurrent input size m).
  std::size_t encoder_input_dim() const noexcept;

  Json to_json() const;
  static EtaModelConfig from_json(const Json& j);
};

/// Embedding table of `dim` x `cardinality`; id j maps to column j.
struct EmbeddingTable {
  Parameter table;
  std::size_t dim() const noexcept { return table.value.rows(); }
  std::size_t cardinality() const noexcept { return table.value.cols(); }
};

/// Copy of column `id`. Throws IndexError when id >= cardinality.
Matrix embed_lookup(const EmbeddingTable& table, std::size_t id);

inline constexpr int kCheckpointVersion = 1;

class EtaModel {
 public:
  /// Random initialisation: Glorot-uniform weights, zero biases, embeddings
  /// uniform in [-0.1, 0.1].
  EtaModel(EtaModelConfig cfg, Rng& rng);
  /// Every tensor zero.
  static EtaModel zeros(EtaModelConfig cfg);

  const EtaModelConfig& config() const noexcept { return cfg_; }
  EtaModelConfig& mutable_config() noexcept { return cfg_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  const CellParams* cell() const noexcept { return cell_ ? &*cell_ : nullptr; }

  /// 1 x batch.size row of predicted seconds, in batch order. With
  /// `trainable` the parameters accumulate gradients on backward.
  Var forward(Tape& tape, const Batch& batch, bool trainable = true);
  std::vector<double> predict(const Batch& batch) const;
  double forward_trip(const TripRecord& trip, std::int64_t utc_offset_s = 0) const;

  Json to_checkpoint() const;
  static EtaModel from_checkpoint(const Json& j);
  void save(const std::filesystem::path& path) const;
  static EtaModel load(const std::filesystem::path& path);

 private:
  explicit EtaModel(EtaModelConfig cfg);
  void allocate();
  Var forward_impl(Tape& tape, const Batch& batch, bool trainable);

  EtaModelConfig cfg_;
  EmbeddingTable link_embed_;
  EmbeddingTable driver_embed_;
  EmbeddingTable slice_embed_;
  EmbeddingTable weekday_embed_;
  std::vector<Parameter> mlp_w_;
  std::vector<Parameter> mlp_b_;
  std::optional<CellParams> cell_;
  Parameter reg_w1_, reg_b1_, reg_w2_, reg_b2_;
};

}  // namespace frnn
