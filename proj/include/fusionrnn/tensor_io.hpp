// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON tensor container shared by cell parameter files and model
// checkpoints:
//
//   "tensors": { "<name>": { "rows": R, "cols": C, "data": [row-major] }, ... }
//
// Doubles are written in shortest round-trip form, so save/load is lossless.

#include <filesystem>
#include <span>

#include "json.hpp"

#include "fusionrnn/cells.hpp"
#include "fusionrnn/tape.hpp"

namespace frnn {

using Json = nlohmann::ordered_json;

inline constexpr int kCellFileVersion = 1;

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& name);

Json tensors_to_json(std::span<const Parameter* const> tensors);
/// Fills every tensor in `into` from the container by name. Missing names,
/// extra names and shape mismatches are ValidationErrors.
void tensors_from_json(const Json& container, std::span<Parameter* const> into);

Json cell_to_json(const CellParams& params);
CellParams cell_from_json(const Json& j);

void save_cell_params(const std::filesystem::path& path, const CellParams& params);
CellParams load_cell_params(const std::filesystem::path& path);

/// Whole-file helpers raising IoError on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace frnn
