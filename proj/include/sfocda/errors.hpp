#pragma once

#include <stdexcept>
#include <string>

namespace sfocda {

/// Tensor dimension / geometry violations.
class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or contradictory configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing/corrupt data or I/O failure (CLI exit code 3).
class DataError : public std::runtime_error {
public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: a precondition the caller must guarantee.
class ContractError : public std::runtime_error {
public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sfocda
