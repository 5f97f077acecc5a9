#pragma once

#include <stdexcept>
#include <string>

namespace sfdiff {

// Input outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A configured resource cap would be exceeded.
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or a failed factorization.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shapes or call sequence do not match the documented contract.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid run configuration (unknown keys, out-of-protocol values, missing files).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sfdiff
