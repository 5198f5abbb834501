#pragma once

#include <stdexcept>
#include <string>

namespace nilmgp {

// Base of every error raised by the toolkit. Callers that only care about
// failure vs success catch this; the subclasses say which contract broke.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller-supplied values: dimension mismatch, negative watts, bad index.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (too few homes, num_inducing > n, empty grid, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Cholesky failed even after jitter escalation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. The message carries the path and line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Data that parses but cannot be used (e.g. empty channel intersection).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace nilmgp
