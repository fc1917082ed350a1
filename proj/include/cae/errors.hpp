#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cae {

// Base for every library error so callers can catch the whole family at once.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not line up (matmul inner dims, broadcast, widths).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input value outside the mathematical domain of an operation (e.g. log of
// a non-positive number).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A token or target id fell outside the valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (non-positive sizes, bad flags, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File system / serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// An input that is numerically degenerate for the requested operation,
// e.g. normalizing a (near-)zero vector.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// A training loss went non-finite; carries the step at which it happened.
class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(const std::string& msg, std::size_t step)
      : Error(msg), step_(step) {}
  explicit TrainingDivergenceError(const std::string& msg) : Error(msg), step_(0) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace cae
