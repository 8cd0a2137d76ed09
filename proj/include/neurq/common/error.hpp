#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace neurq {

/// Error kinds named by the engine's operation contracts.
enum class ErrorCode {
  DuplicateTable,
  UnknownTable,
  UnknownColumn,
  AmbiguousColumn,
  UnknownModel,
  UnknownTenant,
  SchemaMismatch,
  FutureSnapshot,
  TypeMismatch,
  SyntaxError,
  UnpinnedPlan,
  MissingStats,
  MissingProfile,
  Infeasible,
  AdmissionRejected,
  EngineOverloaded,
  EngineFault,
  NoCapacity,
  Deadlock,
  TooLarge,
  DegenerateInput,
  ArityMismatch,
  EmptyMask,
  AccessDenied,
  InvalidConfig,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure with a 1-based position inside the input text.
class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& message, std::vector<std::string> expected = {});

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }
  /// `line:col: message`
  const std::string& rendered() const noexcept { return rendered_; }

 private:
  int line_;
  int column_;
  std::vector<std::string> expected_;
  std::string rendered_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace neurq
