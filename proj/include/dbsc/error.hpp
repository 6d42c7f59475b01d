#pragma once

#include <stdexcept>
#include <string>

namespace dbsc {

// Invalid input: bad files, bad configuration, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during estimation (non-finite density, slice sampler
// exhaustion, failed factorization).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dbsc
