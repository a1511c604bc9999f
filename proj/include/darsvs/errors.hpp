#pragma once

#include <stdexcept>
#include <string>

namespace darsvs {

// Shape or arity mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Non-finite loss or gradient during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or missing files, inconsistent datasets, kind mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A metric that is undefined for the given inputs (no frames, zero variance).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace darsvs
