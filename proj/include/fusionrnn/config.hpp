// SPDX-License-Identifier: Apache-2.0
#pragma once

// Key-value run configuration.
//
//   # comment
//   data.weeks = 20
//   model.encoder = fusion
//   model.mlp_hidden_sizes = 64, 64
//   train.max_steps = 20000
//
// Keys are `section.field`; see `CliConfig::to_text()` for the full list with
// defaults. Unknown keys, duplicate keys and malformed values are
// ValidationErrors. `model.num_links` and `model.num_drivers` follow the
// generator cardinalities unless set explicitly.

#include <filesystem>
#include <string>
#include <string_view>

#include "fusionrnn/data.hpp"
#include "fusionrnn/eta_model.hpp"
#include "fusionrnn/train.hpp"

namespace frnn {

struct CliConfig {
  GeneratorConfig data;
  std::string dataset;  // data.dataset: JSONL file; empty = generate in memory
  EtaModelConfig model;
  TrainConfig train;
  std::string out_dir = "run";  // train.out_dir

  /// Applies one `key = value` assignment.
  void set(std::string_view key, std::string_view value);
  /// Parses a whole config text; `origin` only labels error messages.
  void apply_text(std::string_view text, std::string_view origin = "config");
  /// Cross-field checks; call after all assignments.
  void finalize();

  /// Every key with its current value, one per line, parseable by apply_text.
  std::string to_text() const;

  static CliConfig load(const std::filesystem::path& path);

 private:
  bool model_links_set_ = false;
  bool model_drivers_set_ = false;
};

}  // namespace frnn
