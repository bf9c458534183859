#pragma once

#include <stdexcept>
#include <string>

namespace sfot {

/// Bad input: malformed files, out-of-range arguments, shape mismatches.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant did not hold. Indicates a bug, not bad input.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sfot
