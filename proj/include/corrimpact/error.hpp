#pragma once

#include <stdexcept>
#include <string>

namespace corrimpact {

// Input data violates a contract (bad CSV, single-class label, unknown metric...).
// The CLI maps this to exit code 2.
class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed an invalid configuration or argument. CLI exit code 1.
class usage_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace corrimpact
