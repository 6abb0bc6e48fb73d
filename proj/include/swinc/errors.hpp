#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace swinc {

/// Base of every error the library raises. `kind()` is a stable short tag
/// used by the CLI when printing machine-readable error lines.
class Error : public std::runtime_error {
 public:
  Error(std::string_view kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  std::string_view kind() const noexcept { return kind_; }

 private:
  std::string_view kind_;
};

// Shape or extent disagreement between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

// Invalid hyperparameter or unsupported combination.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

// NaN or Inf produced by a forward op.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

// Missing or inconsistent persistent state (running stats, optimizer moments, files).
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error("state", what) {}
};

// Caller broke an API precondition.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error("internal", what) {}
};

}  // namespace swinc
