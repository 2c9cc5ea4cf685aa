#pragma once

#include <stdexcept>

namespace purc {

/// Malformed or inconsistent user input (files, ids, options).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure failed to reach its tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace purc
