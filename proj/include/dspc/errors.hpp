#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dspc {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents disagree with an operation's requirements.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad user-facing configuration (stride/padding, config keys, architecture).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Numeric-domain violation (log of non-positive entry, non-finite loss).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Cholesky pivot failure; carries the index of the failing pivot.
struct NotPositiveDefiniteError : NumericError {
  NotPositiveDefiniteError(const std::string& msg, int pivot_index)
      : NumericError(msg), pivot(pivot_index) {}
  int pivot;
};

struct SingularMatrixError : NumericError {
  explicit SingularMatrixError(const std::string& msg) : NumericError(msg) {}
};

// Misuse of the autodiff graph (non-scalar backward, repeated backward).
struct GraphError : Error {
  explicit GraphError(const std::string& msg) : Error(msg) {}
};

// File parsing failure; carries the byte offset where parsing stopped.
struct ParseError : Error {
  ParseError(const std::string& msg, uint64_t byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  uint64_t offset;
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace dspc
