#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aoe {

// Bad argument or shape; the default failure for precondition checks.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// KL / cross-entropy with zero mass in the second argument where the first is positive.
class DivergenceUndefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A documented precondition (e.g. step-size bound) does not hold.
class PreconditionViolated : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed text input. `line()` is 1-based; 0 means "not tied to a line".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed text whose shape disagrees with its header.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

}  // namespace aoe
