#pragma once

#include <stdexcept>
#include <string>

namespace trinity {

// Error taxonomy. The CLI maps each family to a distinct exit status.

/// A caller broke an operation's precondition (shape mismatch, out-of-range
/// index, non-finite input, values outside the documented domain).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An invalid configuration value or combination of options.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that cannot support the requested computation
/// (too few distinct features, single-class labels, missing artifacts).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A malformed or truncated on-disk artifact.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace trinity
