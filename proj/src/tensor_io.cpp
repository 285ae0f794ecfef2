// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/tensor_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fusionrnn/error.hpp"

namespace frnn {

Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.values().begin(), m.values().end());
  return j;
}

Matrix matrix_from_json(const Json& j, const std::string& name) {
  try {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols)
      throw ValidationError("tensor '" + name + "' declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " but holds " + std::to_string(data.size()) + " values");
    return Matrix(rows, cols, std::move(data));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("tensor '" + name + "': " + e.what());
  } catch (const ShapeError& e) {
    throw ValidationError("tensor '" + name + "': " + e.what());
  }
}

Json tensors_to_json(std::span<const Parameter* const> tensors) {
  Json out = Json::object();
  for (const Parameter* p : tensors) out[p->name] = matrix_to_json(p->value);
  return out;
}

void tensors_from_json(const Json& container, std::span<Parameter* const> into) {
  if (!container.is_object()) throw ValidationError("tensor container must be a JSON object");
  std::set<std::string> expected;
  for (Parameter* p : into) {
    expected.insert(p->name);
    if (!container.contains(p->name)) throw ValidationError("missing tensor '" + p->name + "'");
    Matrix m = matrix_from_json(container.at(p->name), p->name);
    if (!p->value.empty() && !m.same_shape(p->value))
      throw ValidationError("tensor '" + p->name + "' has shape " + m.shape_string() + ", expected " +
                            p->value.shape_string());
    p->value = std::move(m);
    p->grad = Matrix();
  }
  for (const auto& item : container.items())
    if (!expected.count(item.key())) throw ValidationError("unexpected tensor '" + item.key() + "'");
}

Json cell_to_json(const CellParams& params) {
  Json j;
  j["format"] = "fusionrnn.cell";
  j["version"] = kCellFileVersion;
  Json cell;
  cell["kind"] = std::string(to_string(kind_of(params)));
  cell["input_size"] = input_size(params);
  cell["hidden_size"] = hidden_size(params);
  const auto* fusion = std::get_if<FusionCellParams>(&params);
  cell["rounds"] = fusion ? fusion->rounds : 0;
  j["cell"] = cell;
  j["tensors"] = tensors_to_json(tensors(params));
  return j;
}

CellParams cell_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "fusionrnn.cell") throw ValidationError("not a cell parameter file");
    if (j.at("version").get<int>() != kCellFileVersion)
      throw ValidationError("unsupported cell file version " + j.at("version").dump());
    const Json& cell = j.at("cell");
    CellParams params = zero_params(parse_cell_kind(cell.at("kind").get<std::string>()),
                                    cell.at("input_size").get<std::size_t>(),
                                    cell.at("hidden_size").get<std::size_t>(), cell.at("rounds").get<int>());
    auto ts = tensors(params);
    tensors_from_json(j.at("tensors"), ts);
    return params;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed cell file: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_cell_params(const std::filesystem::path& path, const CellParams& params) {
  write_text_file(path, cell_to_json(params).dump() + "\n");
}

CellParams load_cell_params(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return cell_from_json(j);
}

}  // namespace frnn
