// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line front end. Every command prints line-delimited JSON records
// on stdout. Failures print one record on stderr,
//   {"event":"error","kind":"validation","message":"..."}
// and exit with 2 (invalid input of any kind), 3 (numeric divergence) or
// 4 (I/O). A gradient check that runs but fails exits with 1.

#include <iosfwd>
#include <string>
#include <vector>

namespace frnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace frnn::cli
