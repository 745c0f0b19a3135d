#pragma once

#include <stdexcept>
#include <string>

namespace stpe {

// Bad input values or shapes; maps to exit code 2 in the CLI.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class DimensionMismatch : public ValidationError {
 public:
  explicit DimensionMismatch(const std::string& what) : ValidationError(what) {}
};

// File could not be opened, read or written; maps to exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stpe
