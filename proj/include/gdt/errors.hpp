#pragma once

#include <stdexcept>
#include <string>

namespace gdt {

// Argument outside the domain of an operation (unknown factor value, zero-norm row, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A sampling plan that cannot be realized, e.g. K_m larger than the factor space.
struct PlanError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An anchor has a counted positive but nothing to normalize against.
struct DegenerateObjectiveError : std::runtime_error {
  DegenerateObjectiveError(std::size_t anchor, const std::string& what)
      : std::runtime_error(what), anchor(anchor) {}
  std::size_t anchor;
};

struct TrainingError : std::runtime_error {
  TrainingError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step(step) {}
  std::size_t step;
};

struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace gdt
