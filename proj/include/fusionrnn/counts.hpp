// SPDX-License-Identifier: Apache-2.0
#pragma once

// Closed-form parameter and multiplication counts of one recurrent cell, as
// polynomials in the input size m and hidden size n.

#include <cstdint>
#include <string>

#include "fusionrnn/cells.hpp"

namespace frnn {

/// c_mn*m*n + c_nn*n^2 + c_n*n + c_m*m
struct CountPolynomial {
  std::int64_t mn = 0;
  std::int64_t nn = 0;
  std::int64_t n = 0;
  std::int64_t m = 0;

  std::uint64_t evaluate(std::uint64_t m_size, std::uint64_t n_size) const noexcept;
  /// e.g. "3mn+n²+n"
  std::string to_string() const;
  /// The polynomial with m = n substituted, e.g. "4n²+n".
  std::string to_string_equal_sizes() const;

  friend bool operator==(const CountPolynomial&, const CountPolynomial&) = default;
};

CountPolynomial param_polynomial(CellKind kind);
/// Per time step. For the fusion cell, odd rounds multiply an m-vector and
/// even rounds an n-vector, giving floor(r/2)*n + ceil(r/2)*m Hadamard terms.
CountPolynomial mult_polynomial(CellKind kind, int rounds);

std::uint64_t param_count(CellKind kind, std::uint64_t m, std::uint64_t n, int rounds = 0);
std::uint64_t mult_count(CellKind kind, std::uint64_t m, std::uint64_t n, int rounds = 0,
                         std::uint64_t seq_len = 1);

}  // namespace frnn
