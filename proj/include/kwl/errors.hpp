#pragma once

#include <stdexcept>
#include <string>

namespace kwl {

// Bad caller input: out-of-range parameters, malformed flags, size mismatches.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A checked mathematical property did not hold.
class PropertyViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation ran out of budget: memory, resolution, iteration or range limits.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kwl
