#include "neurq/common/error.hpp"

namespace neurq {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateTable: return "DuplicateTable";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::AmbiguousColumn: return "AmbiguousColumn";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownTenant: return "UnknownTenant";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::FutureSnapshot: return "FutureSnapshot";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnpinnedPlan: return "UnpinnedPlan";
    case ErrorCode::MissingStats: return "MissingStats";
    case ErrorCode::MissingProfile: return "MissingProfile";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::AdmissionRejected: return "AdmissionRejected";
    case ErrorCode::EngineOverloaded: return "EngineOverloaded";
    case ErrorCode::EngineFault: return "EngineFault";
    case ErrorCode::NoCapacity: return "NoCapacity";
    case ErrorCode::Deadlock: return "Deadlock";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::AccessDenied: return "AccessDenied";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Error";
}

namespace {
std::string render(int line, int column, const std::string& message, const std::vector<std::string>& expected) {
  std::string out = std::to_string(line) + ":" + std::to_string(column) + ": " + message;
  if (!expected.empty()) {
    out += " (expected ";
    for (size_t i = 0; i < expected.size(); ++i) out += (i ? ", " : "") + expected[i];
    out += ")";
  }
  return out;
}
}  // namespace

SyntaxError::SyntaxError(int line, int column, const std::string& message, std::vector<std::string> expected)
    : Error(ErrorCode::SyntaxError, render(line, column, message, expected)),
      line_(line),
      column_(column),
      expected_(std::move(expected)),
      rendered_(render(line, column, message, expected_)) {}

}  // namespace neurq
