#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coronet {

// All library failures derive from Error so callers (the CLI in particular)
// can report any of them uniformly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied values outside an operation's domain.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary/image/weights content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; carries the 1-based line where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Architecture configuration that cannot be realised.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace coronet
