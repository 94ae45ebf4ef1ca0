#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccf {

enum class ErrorKind {
  Schema,
  Ordering,
  EmptyInput,
  UnfillableColumn,
  InsufficientData,
  SplitTooSmall,
  Config,
  DegenerateScale,
  DegenerateWindow,
  ShapeMismatch,
  Usage,
  UnknownName,
  Version,
  Checksum,
  Truncated,
  Divergence,
  FingerprintMismatch,
  UndefinedImpact,
  InvalidArgument,
  NotFound,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::EmptyInput: return "empty_input";
    case ErrorKind::UnfillableColumn: return "unfillable_column";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::SplitTooSmall: return "split_too_small";
    case ErrorKind::Config: return "config";
    case ErrorKind::DegenerateScale: return "degenerate_scale";
    case ErrorKind::DegenerateWindow: return "degenerate_window";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::UnknownName: return "unknown_name";
    case ErrorKind::Version: return "version";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::FingerprintMismatch: return "fingerprint_mismatch";
    case ErrorKind::UndefinedImpact: return "undefined_impact";
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ccf
