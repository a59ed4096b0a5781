#pragma once

#include <stdexcept>
#include <string>

namespace spmpc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition (non-finite input, bad width, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Fixed-point result out of range while the format asks for an error.
class OverflowError : public Error {
 public:
  using Error::Error;
};

/// Operands carry different fixed-point formats.
class FormatMismatch : public Error {
 public:
  using Error::Error;
};

/// The linear system of an update step cannot be factorized.
class SingularSystem : public Error {
 public:
  using Error::Error;
};

/// An iterate became non-finite.
class Divergence : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Configuration file or flag problem. `line` is 0 when not tied to a line.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace spmpc
