#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace shadow_opt {

enum class ErrorKind {
  NonSymmetric,
  EmptyDataset,
  ParseError,
  BadLabel,
  NonFiniteGradient,
  NoiseBoundViolated,
  BadMomentum,
  NonFiniteState,
  OrbitTooLong,
  NotStronglyConvex,
  PerturbationTooLarge,
  NoiseDominates,
  NotContracting,
  NotExpanding,
  SingularMap,
  NotHyperbolic,
  StepTooLarge,
  FixedPointNotConverged,
  InvalidArgument,
  ConfigError,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::NoiseBoundViolated: return "NoiseBoundViolated";
    case ErrorKind::BadMomentum: return "BadMomentum";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::OrbitTooLong: return "OrbitTooLong";
    case ErrorKind::NotStronglyConvex: return "NotStronglyConvex";
    case ErrorKind::PerturbationTooLarge: return "PerturbationTooLarge";
    case ErrorKind::NoiseDominates: return "NoiseDominates";
    case ErrorKind::NotContracting: return "NotContracting";
    case ErrorKind::NotExpanding: return "NotExpanding";
    case ErrorKind::SingularMap: return "SingularMap";
    case ErrorKind::NotHyperbolic: return "NotHyperbolic";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::FixedPointNotConverged: return "FixedPointNotConverged";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `index()` carries the orbit step or
/// file row the failure is attached to, when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

/// Raised for invalid configuration; names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(ErrorKind::ConfigError, field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace shadow_opt
