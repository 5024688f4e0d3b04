#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace poe {

// Base class for all library errors. The C API maps subclasses onto
// numeric status codes; the CLI turns those into exit codes.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite or out-of-domain numeric input.
class InvalidInput : public Error {
public:
  using Error::Error;
};

// Mismatched dimensions between coupled arguments.
class ShapeError : public Error {
public:
  using Error::Error;
};

// Class label outside [0, K).
class InvalidLabel : public Error {
public:
  using Error::Error;
};

// Pearson correlation requested on constant input.
class UndefinedCorrelation : public Error {
public:
  using Error::Error;
};

// Bad configuration value or unknown key.
class InvalidConfig : public Error {
public:
  using Error::Error;
};

// PoE training requested for an example id with no cached weak logits.
class MissingWeakLogits : public Error {
public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number of the failure.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// Filesystem-level failure (open/write/rename).
class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace poe
