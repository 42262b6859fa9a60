#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reaffirm {

/// Failure classes raised by model construction, parsing and editing.
enum class ErrorKind {
  Parse,
  UnresolvedName,
  DuplicateName,
  DuplicateFlow,
  DuplicateReset,
  NoCopy,
  Ambiguous,
  UnknownElement,
  Type,
  Format,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return "ParseError";
    case ErrorKind::UnresolvedName: return "UnresolvedName";
    case ErrorKind::DuplicateName: return "DuplicateName";
    case ErrorKind::DuplicateFlow: return "DuplicateFlow";
    case ErrorKind::DuplicateReset: return "DuplicateReset";
    case ErrorKind::NoCopy: return "NoCopy";
    case ErrorKind::Ambiguous: return "Ambiguous";
    case ErrorKind::UnknownElement: return "UnknownElement";
    case ErrorKind::Type: return "TypeError";
    case ErrorKind::Format: return "FormatError";
  }
  return "Error";
}

class ModelError : public std::runtime_error {
 public:
  ModelError(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A syntax error inside a piece of source text. Line and column are 1-based.
class ParseError : public ModelError {
 public:
  ParseError(const std::string& message, std::size_t line, std::size_t column)
      : ModelError(ErrorKind::Parse, std::to_string(line) + ":" + std::to_string(column) + ": " + message),
        detail_(message),
        line_(line),
        column_(column) {}

  const std::string& detail() const noexcept { return detail_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string detail_;
  std::size_t line_;
  std::size_t column_;
};

/// Malformed model file. Line/column are 0 when the problem is structural
/// (missing key, wrong type) rather than a JSON syntax error.
class FormatError : public ModelError {
 public:
  FormatError(const std::string& message, std::size_t line = 0, std::size_t column = 0)
      : ModelError(ErrorKind::Format,
                   line > 0 ? std::to_string(line) + ":" + std::to_string(column) + ": " + message : message),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

}  // namespace reaffirm
