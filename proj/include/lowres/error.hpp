#pragma once

#include <stdexcept>
#include <string>

namespace lowres {

/// Raised for every contract violation in the library: malformed input,
/// failed preconditions, external command failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lowres
