#pragma once

#include <stdexcept>
#include <string>

namespace gslab {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Precondition or invariant violated by the caller (bad shapes, empty batch, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public ContractError {
 public:
  explicit ShapeError(const std::string& msg) : ContractError(msg) {}
};

// Malformed input file; carries a byte or line offset in the message.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Invalid experiment configuration; `field` is the offending config path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, std::string field = "")
      : Error(field.empty() ? msg : msg + " (field: " + field + ")"),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// A computation produced non-finite values where its contract requires finite ones.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Backward pass hit a primitive with no registered derivative rule.
class UnsupportedPrimitiveError : public Error {
 public:
  explicit UnsupportedPrimitiveError(const std::string& msg) : Error(msg) {}
};

}  // namespace gslab
