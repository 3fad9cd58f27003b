#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace taskgen {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments or input shape was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data could not be decoded.
class ParseError : public Error {
 public:
  enum class Kind { Empty, Malformed, InconsistentWidth, NonFinite, BadHeader, Truncated, Io };

  /// `location` is a 1-based line number for text formats and a byte offset
  /// for binary formats.
  ParseError(Kind kind, std::size_t location, const std::string& what)
      : Error(what), kind_(kind), location_(location) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t location() const noexcept { return location_; }

 private:
  Kind kind_;
  std::size_t location_;
};

/// The optimizer produced a non-finite value or a linear-algebra
/// precondition (positive definiteness) failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace taskgen
