#pragma once

#include <stdexcept>
#include <string>

namespace platoon {

// Input file violates the expected layout (wrong column count, bad header,
// unparseable field). Message carries file/line context when available.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that breaks a semantic contract (non-monotonic
// time, stage mismatch, length mismatch between channels).
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-supplied configuration value.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Not enough samples/segments to perform the requested operation.
class InsufficientDataError : public std::runtime_error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : std::runtime_error(what) {}
};

// Numerical routine failed to meet its own convergence contract.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace platoon
