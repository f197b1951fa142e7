#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctdgm {

// Base of every error raised by the toolkit. The CLI maps the three
// families below onto exit codes 2, 3 and 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters or configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or unusable input data (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

// A checked internal invariant did not hold (exit code 4).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A well-formed line whose values are not admissible (e.g. size <= 0).
class RejectedRecord : public DataError {
 public:
  RejectedRecord(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyTraceError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace ctdgm
