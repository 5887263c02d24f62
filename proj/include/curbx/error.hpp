#pragma once

#include <stdexcept>
#include <string>

namespace curbx {

// Bad input: a precondition, a parameter out of range or a malformed file.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The environment failed us: unreadable or unwritable paths.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace curbx
