// SPDX-License-Identifier: Apache-2.0
#include "fusionrnn/counts.hpp"

#include "fusionrnn/error.hpp"

namespace frnn {
namespace {

void append_term(std::string& out, std::int64_t coeff, const char* symbol) {
  if (coeff == 0) return;
  if (!out.empty()) out += coeff > 0 ? "+" : "-";
  else if (coeff < 0) out += "-";
  const std::int64_t mag = coeff < 0 ? -coeff : coeff;
  if (mag != 1) out += std::to_string(mag);
  out += symbol;
}

void check_sizes(std::uint64_t m, std::uint64_t n) {
  if (m < 1 || n < 1) throw ValidationError("cell sizes m and n must be >= 1");
}

}  // namespace

std::uint64_t CountPolynomial::evaluate(std::uint64_t m_size, std::uint64_t n_size) const noexcept {
  const auto total = mn * static_cast<std::int64_t>(m_size * n_size) + nn * static_cast<std::int64_t>(n_size * n_size) +
                     n * static_cast<std::int64_t>(n_size) + m * static_cast<std::int64_t>(m_size);
  return static_cast<std::uint64_t>(total);
}

std::string CountPolynomial::to_string() const {
  std::string out;
  append_term(out, mn, "mn");
  append_term(out, nn, "n²");
  append_term(out, n, "n");
  append_term(out, m, "m");
  return out.empty() ? "0" : out;
}

std::string CountPolynomial::to_string_equal_sizes() const {
  std::string out;
  append_term(out, mn + nn, "n²");
  append_term(out, n + m, "n");
  return out.empty() ? "0" : out;
}

CountPolynomial param_polynomial(CellKind kind) {
  switch (kind) {
    case CellKind::lstm: return {4, 4, 4, 0};
    case CellKind::gru: return {3, 3, 3, 0};
    case CellKind::fusion: return {3, 1, 1, 0};
    case CellKind::elman: return {1, 1, 1, 0};
  }
  return {};
}

CountPolynomial mult_polynomial(CellKind kind, int rounds) {
  switch (kind) {
    case CellKind::lstm: return {4, 4, 3, 0};
    case CellKind::gru: return {3, 3, 3, 0};
    case CellKind::elman: return {1, 1, 0, 0};
    case CellKind::fusion:
      if (rounds < 0 || rounds > kMaxFusionRounds) throw ValidationError("fusion rounds must lie in [0, 16]");
      return {1 + rounds, 1, rounds / 2, (rounds + 1) / 2};
  }
  return {};
}

std::uint64_t param_count(CellKind kind, std::uint64_t m, std::uint64_t n, int rounds) {
  check_sizes(m, n);
  if (kind == CellKind::fusion && (rounds < 0 || rounds > kMaxFusionRounds))
    throw ValidationError("fusion rounds must lie in [0, 16]");
  return param_polynomial(kind).evaluate(m, n);
}

std::uint64_t mult_count(CellKind kind, std::uint64_t m, std::uint64_t n, int rounds, std::uint64_t seq_len) {
  check_sizes(m, n);
  if (seq_len < 1) throw ValidationError("sequence length must be >= 1");
  return mult_polynomial(kind, rounds).evaluate(m, n) * seq_len;
}

}  // namespace frnn
