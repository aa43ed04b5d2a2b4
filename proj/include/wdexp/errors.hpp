#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace wdexp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Complex roots: lambda*eta > (1 - sqrt(gamma))^2. phase is -1 when not tied to a phase.
struct InfeasibleRoots : Error {
  InfeasibleRoots(const std::string& what, int phase = -1) : Error(what), phase(phase) {}
  int phase;
};

struct NonPositiveAlpha : Error {
  NonPositiveAlpha(std::int64_t t, double value);
  std::int64_t t;
  double value;
};

struct BoundViolation : Error {
  BoundViolation(std::int64_t t, const std::string& what) : Error(what), t(t) {}
  std::int64_t t;
};

struct DimensionMismatch : Error {
  using Error::Error;
};
struct NonPositiveScale : Error {
  using Error::Error;
};
struct LemmaViolation : Error {
  using Error::Error;
};

struct NumericalBlowup : Error {
  NumericalBlowup(std::int64_t t, const std::string& what) : Error(what), t(t) {}
  std::int64_t t;
};

struct LengthMismatch : Error {
  using Error::Error;
};
struct InsufficientLength : Error {
  using Error::Error;
};
struct InvalidBudget : Error {
  using Error::Error;
};
struct CycleDetected : Error {
  using Error::Error;
};
struct InvalidArity : Error {
  using Error::Error;
};
struct RealizationMismatch : Error {
  using Error::Error;
};
struct DegenerateBatch : Error {
  using Error::Error;
};

// Bad user input: malformed schedule, run spec or graph file.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace wdexp
