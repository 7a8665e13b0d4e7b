#pragma once

#include <stdexcept>
#include <string>

namespace vcaug {

// Error taxonomy shared by every module. The C API maps each class onto a
// status code, and the CLI maps status codes onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Carries a 1-based line (and optionally column).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line, int column = 0)
      : Error(Format(what, line, column)), message_(what), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }
  // The message without the position prefix.
  const std::string& message() const { return message_; }

 private:
  static std::string Format(const std::string& what, int line, int column) {
    std::string s = "line " + std::to_string(line);
    if (column > 0) s += ", column " + std::to_string(column);
    return s + ": " + what;
  }
  std::string message_;
  int line_;
  int column_;
};

// Data that parsed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition (shapes, modes, arguments).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Unknown key: speaker, name, stage.
class LookupError : public Error {
 public:
  using Error::Error;
};

// A statistics query selected no rows, or named a system not present.
class SelectionError : public LookupError {
 public:
  using LookupError::LookupError;
};

// Paired test inputs that cannot be matched one to one.
class PairingError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Phoneme symbol outside the model vocabulary.
class VocabularyError : public LookupError {
 public:
  using LookupError::LookupError;
};

// Recipe referenced a dataset no registered manifest can satisfy.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage failed while running.
class ExecutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace vcaug
