#pragma once

#include <stdexcept>
#include <string>

namespace uarpo {

// Error taxonomy mirrors the CLI exit codes: config/usage problems (2),
// I/O problems (3), numerical failures (4).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape violations carry the primitive name and the offending shapes.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uarpo
