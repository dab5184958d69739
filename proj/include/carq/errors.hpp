#pragma once

#include <stdexcept>
#include <string>

namespace carq {

// Invalid scheme/run configuration (bad pi, lambda, method combination).
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Input data cannot support the requested estimator (empty arm,
// degenerate propensity in the observed sample, malformed sample).
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure during computation (zero density estimate,
// degenerate bootstrap draw after retry).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace carq
