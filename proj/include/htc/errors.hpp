#pragma once

#include <stdexcept>
#include <string>

namespace htc {

/// Bad invocation (flags, config values). CLI exit code 1.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad input data (CSV schema, labels, malformed resource files). Exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace htc
