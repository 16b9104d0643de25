#pragma once

#include <stdexcept>
#include <string>

namespace rblw {

enum class ErrorKind {
  NumericalBlowup,
  Unsupported,
  ConvergenceFailure,
  ProfileOutOfRange,
  DecompositionFailure,
  Validation,
  Io
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::NumericalBlowup: return "NumericalBlowup";
    case ErrorKind::Unsupported: return "Unsupported";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::ProfileOutOfRange: return "ProfileOutOfRange";
    case ErrorKind::DecompositionFailure: return "DecompositionFailure";
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Exit code mapping used by the command line driver.
inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation:
    case ErrorKind::Io:
    case ErrorKind::Unsupported:
      return 2;
    default:
      return 3;
  }
}

}  // namespace rblw
