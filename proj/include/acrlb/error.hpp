#ifndef ACRLB_ERROR_HPP
#define ACRLB_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace acrlb {

enum class ErrorKind {
  DomainViolation,
  SupportMismatch,
  BudgetExceeded,
  IndexOutOfRange,
  AlphaZero,
  AlphaExcluded,
  AlphaMismatch,
  StepTooLarge,
  IllConditioned,
  EmptyData,
  NonConvergence,
  BiasedEstimator,
  InvalidArgument,
  ParseError,
  ValidationError,
  IoError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::SupportMismatch: return "SupportMismatch";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::AlphaZero: return "AlphaZero";
    case ErrorKind::AlphaExcluded: return "AlphaExcluded";
    case ErrorKind::AlphaMismatch: return "AlphaMismatch";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::BiasedEstimator: return "BiasedEstimator";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so the
/// command-line front end can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// what() without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// True for failures of the computation itself rather than of its inputs.
constexpr bool is_computational(ErrorKind kind) noexcept {
  return kind == ErrorKind::IllConditioned || kind == ErrorKind::BudgetExceeded ||
         kind == ErrorKind::NonConvergence || kind == ErrorKind::BiasedEstimator ||
         kind == ErrorKind::IoError;
}

}  // namespace acrlb

#endif  // ACRLB_ERROR_HPP
