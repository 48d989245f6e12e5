#pragma once

#include <stdexcept>
#include <string>

namespace fgee {

/// Bad input: malformed files, invalid configuration, shape mismatches,
/// out-of-domain arguments. Maps to CLI exit code 1.
struct validation_error : std::runtime_error {
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: singular systems, diverging iterations, positive
/// definiteness violations. Maps to CLI exit code 2.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fgee
