#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moneyflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Raw weights that sum to zero cannot be normalized.
class DegenerateDistributionError : public Error {
 public:
  using Error::Error;
};

class EmptyDataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A malformed input line. `line()` is 1-based; 0 means "not tied to a line".
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace moneyflow
