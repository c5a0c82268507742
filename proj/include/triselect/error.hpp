#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace triselect {

enum class ErrorKind {
  MalformedField,
  MissingField,
  ConstraintViolation,
  MalformedRecord,
  DuplicatePid,
  DegeneratePair,
  TooFewRecords,
  DegenerateAngle,
  InvalidSigma,
  InvalidK,
  EmptyClusterUnrecoverable,
  ImageTooSmall,
  NoFeatures,
  AsymmetricInput,
  ConfigInvalid,
  PoseOutOfRange,
  MissingStage,
  DecodeFailed,
  CacheFormat,
  EmptyStageInput,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedField: return "MalformedField";
    case ErrorKind::MissingField: return "MissingField";
    case ErrorKind::ConstraintViolation: return "ConstraintViolation";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::DuplicatePid: return "DuplicatePid";
    case ErrorKind::DegeneratePair: return "DegeneratePair";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
    case ErrorKind::DegenerateAngle: return "DegenerateAngle";
    case ErrorKind::InvalidSigma: return "InvalidSigma";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::EmptyClusterUnrecoverable: return "EmptyClusterUnrecoverable";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::NoFeatures: return "NoFeatures";
    case ErrorKind::AsymmetricInput: return "AsymmetricInput";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::PoseOutOfRange: return "PoseOutOfRange";
    case ErrorKind::MissingStage: return "MissingStage";
    case ErrorKind::DecodeFailed: return "DecodeFailed";
    case ErrorKind::CacheFormat: return "CacheFormat";
    case ErrorKind::EmptyStageInput: return "EmptyStageInput";
  }
  return "Unknown";
}

/// Coarse failure class, used for process exit codes.
enum class ErrorClass { Config, Input, Pipeline };

inline ErrorClass classify(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::InvalidSigma:
    case ErrorKind::InvalidK:
    case ErrorKind::PoseOutOfRange:
      return ErrorClass::Config;
    case ErrorKind::MalformedField:
    case ErrorKind::MissingField:
    case ErrorKind::ConstraintViolation:
    case ErrorKind::MalformedRecord:
    case ErrorKind::DuplicatePid:
    case ErrorKind::DegenerateAngle:
    case ErrorKind::ImageTooSmall:
    case ErrorKind::DecodeFailed:
    case ErrorKind::CacheFormat:
      return ErrorClass::Input;
    default:
      return ErrorClass::Pipeline;
  }
}

/// Base exception for every library failure. `kind()` identifies the
/// failure class; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Record-level manifest failure; `line()` is 1-based.
class RecordError : public Error {
 public:
  RecordError(ErrorKind kind, std::size_t line, const std::string& detail)
      : Error(kind, "line " + std::to_string(line) + ": " + detail), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class PidError : public Error {
 public:
  PidError(ErrorKind kind, std::uint64_t pid, const std::string& detail)
      : Error(kind, "pid " + std::to_string(pid) + ": " + detail), pid_(pid) {}

  std::uint64_t pid() const noexcept { return pid_; }

 private:
  std::uint64_t pid_;
};

}  // namespace triselect
