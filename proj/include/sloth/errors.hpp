#pragma once

#include <stdexcept>
#include <string>

namespace sloth {

// Shape/dimension mismatch between operands.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an operation's precondition (empty input, negative count, ...).
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Sequence does not fit the configured capacity.
struct CapacityError : std::runtime_error {
  explicit CapacityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or rejected configuration input.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / serialization failure.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sloth
