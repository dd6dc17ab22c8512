#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace actmon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside the operation's domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Data violates a documented invariant (shape, labels, finiteness...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded. `offset()` is a byte offset for binary
/// input and a 1-based line number for text input.
class ParseError : public Error {
 public:
  enum class Kind { Header, RowWidth, NonFinite, Syntax, Truncated };

  ParseError(Kind kind, std::uint64_t offset, const std::string& what)
      : Error(what), kind_(kind), offset_(offset) {}

  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

/// Artifact written by an incompatible schema version.
class VersionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace actmon
