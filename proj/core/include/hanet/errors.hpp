// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hanet {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// Malformed input record; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SelectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MemoryIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckInvalidError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hanet
