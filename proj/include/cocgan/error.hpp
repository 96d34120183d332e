#pragma once

#include <stdexcept>
#include <string>

namespace cocgan {

// Shapes, counts or hyperparameters that violate a structural constraint.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller broke an operation's precondition (non-scalar root, wrong label use, ...).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Values outside the domain of a numeric routine, or NaN/Inf produced.
struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};

// Bad user-supplied data (too few samples, unnormalized probabilities, labels).
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or incompatible files.
struct LoadError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cocgan
