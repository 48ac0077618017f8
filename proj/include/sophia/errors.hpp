#pragma once

#include <stdexcept>
#include <string>

namespace sophia {

// Base class for all errors raised by the library. The CLI maps these to a
// single machine-readable "error: <kind>: <message>" line and a nonzero exit.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

// Non-finite value produced by a tape primitive.
struct OverflowError : Error {
  explicit OverflowError(const std::string& m) : Error("overflow", m) {}
};

struct SizeError : Error {
  explicit SizeError(const std::string& m) : Error("size", m) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& m) : Error("parameter", m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// Hessian estimate supplied off-schedule, or missing on a Hessian step.
struct SchedulingError : Error {
  explicit SchedulingError(const std::string& m) : Error("scheduling", m) {}
};

struct UnsupportedEstimatorError : Error {
  explicit UnsupportedEstimatorError(const std::string& m)
      : Error("unsupported-estimator", m) {}
};

struct DefinitenessError : Error {
  explicit DefinitenessError(const std::string& m) : Error("definiteness", m) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string& m) : Error("precondition", m) {}
};

struct TuningFailure : Error {
  explicit TuningFailure(const std::string& m) : Error("tuning-failure", m) {}
};

struct IncomparableError : Error {
  explicit IncomparableError(const std::string& m) : Error("incomparable", m) {}
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace sophia
