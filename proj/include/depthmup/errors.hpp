#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace depthmup {

// Input outside the mathematical domain of an operation (L = 0, non-finite exponents,
// indefinite covariance, nonpositive values on a log axis, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Missing or inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape or state mismatch between collaborating objects.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Requested table sizes exceed the configured memory budget. Thrown before allocating.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A forward pass produced a non-finite activation.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int layer)
      : std::runtime_error(what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

// Malformed binary input. `offset` is the byte offset where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace depthmup
