#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace odcs {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message) {}
};

/// Shape or axis mismatch between tensors; the message names the offending axes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API precondition (non-scalar loss, missing gradient, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A forward operation produced NaN or Inf from finite inputs.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error(message + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Cup-to-disc ratio is undefined because the disc region is empty.
class CdrUndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace odcs
