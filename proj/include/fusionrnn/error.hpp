// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace frnn {

/// Base class of every error raised by the library. `kind()` is a stable
/// lowercase tag used in machine-readable error records.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define FRNN_DEFINE_ERROR(Name, tag)                      \
  class Name : public Error {                             \
   public:                                                \
    using Error::Error;                                   \
    const char* kind() const noexcept override { return tag; } \
  };

FRNN_DEFINE_ERROR(ShapeError, "shape")
FRNN_DEFINE_ERROR(StateError, "state")
FRNN_DEFINE_ERROR(IndexError, "index")
FRNN_DEFINE_ERROR(DomainError, "domain")
FRNN_DEFINE_ERROR(ValidationError, "validation")
FRNN_DEFINE_ERROR(IoError, "io")
FRNN_DEFINE_ERROR(DivergenceError, "divergence")

#undef FRNN_DEFINE_ERROR

}  // namespace frnn
