#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lcsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration value violates a documented invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The device shape cannot host the model (head sharding or memory).
class InfeasibleConfig : public Error {
 public:
  using Error::Error;
};

/// A trace or profile file could not be parsed. `line()` is 1-based, 0 if unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// No KVP rank currently has room for a request.
class AdmissionError : public Error {
 public:
  using Error::Error;
};

}  // namespace lcsim
