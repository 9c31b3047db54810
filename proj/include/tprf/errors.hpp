#pragma once

#include <stdexcept>
#include <string>

namespace tprf {

// Error categories surfaced by the CLI as "error: <kind>: <message>".
enum class ErrorKind {
  Format,      // bad magic / unknown version
  Corruption,  // header promises more payload than the file holds
  Parse,       // malformed text input
  Validation,  // violated precondition or invariant
  Config,      // inconsistent or incomplete configuration
  Numeric,     // non-finite value where a finite one is required
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  const char* kind_name() const {
    switch (kind_) {
      case ErrorKind::Format: return "format";
      case ErrorKind::Corruption: return "corruption";
      case ErrorKind::Parse: return "parse";
      case ErrorKind::Validation: return "validation";
      case ErrorKind::Config: return "config";
      case ErrorKind::Numeric: return "numeric";
    }
    return "unknown";
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_format(const std::string& m) { throw Error(ErrorKind::Format, m); }
[[noreturn]] inline void throw_corruption(const std::string& m) { throw Error(ErrorKind::Corruption, m); }
[[noreturn]] inline void throw_parse(const std::string& m) { throw Error(ErrorKind::Parse, m); }
[[noreturn]] inline void throw_validation(const std::string& m) { throw Error(ErrorKind::Validation, m); }
[[noreturn]] inline void throw_config(const std::string& m) { throw Error(ErrorKind::Config, m); }
[[noreturn]] inline void throw_numeric(const std::string& m) { throw Error(ErrorKind::Numeric, m); }

}  // namespace tprf
