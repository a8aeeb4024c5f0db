#pragma once

#include <stdexcept>
#include <string>

namespace tml {

/// Invalid user configuration (bad parameter combination, unknown key, ...).
/// The CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A non-finite value showed up where a finite one was required (exit code 3).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tml
