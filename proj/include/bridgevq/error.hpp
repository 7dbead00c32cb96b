#pragma once

#include <stdexcept>
#include <string>

namespace bridgevq {

/// Raised for arguments outside an operation's domain (non-positive rates,
/// step indices out of range, mismatched shapes).
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a parameterization is requested that the implementation does
/// not provide, e.g. the epsilon-form reverse mean with a non-zero target.
class UnsupportedParameterization : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A loss or gradient evaluated to NaN/Inf. `term()` names the culprit.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::string term, double value)
      : std::runtime_error("non-finite value in term '" + term + "': " + std::to_string(value)),
        term_(std::move(term)) {}
  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

/// Malformed files, version mismatches and schema violations.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bridgevq
