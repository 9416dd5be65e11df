#pragma once

#include <stdexcept>
#include <string>

namespace jetspec {

/// Precondition or configuration violation. Maps to CLI exit status 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical kernel could not meet its accuracy contract. Exit status 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failure, carrying the offending path in the message. Exit status 4.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace jetspec
