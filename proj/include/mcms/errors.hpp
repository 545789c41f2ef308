#pragma once

#include <stdexcept>
#include <string>

namespace mcms {

/// Base error for all failures raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// File parsing / format violations.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

/// Estimation failures (singular input, non-convergence, identification).
class FitError : public Error {
 public:
  explicit FitError(const std::string& what) : Error(what) {}
};

/// Invalid configuration or contract violation at a module boundary.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace mcms
