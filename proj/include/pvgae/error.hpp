#pragma once

#include <stdexcept>
#include <string>

namespace pvgae {

// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated call contract (bad argument, wrong state).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Files or matrices that parse individually but disagree with each other.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A requested link split cannot be satisfied by the graph.
class InfeasibleSplitError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Classifier training set collapses to a single class.
class DegenerateLabelError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace pvgae
