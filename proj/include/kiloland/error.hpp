#pragma once

#include <stdexcept>
#include <string>

namespace kiloland {

enum class ErrorKind {
  validation,  // inputs violate a documented precondition
  usage,       // bad command line
  io,          // unreadable or unwritable file
  integrity,   // checksum, layout or coverage mismatch
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::validation, what) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& what)
      : Error(ErrorKind::integrity, what) {}
};

/// Process exit code for an error kind: 1 validation, 2 usage, 3 I/O or integrity.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
      return 1;
    case ErrorKind::usage:
      return 2;
    case ErrorKind::io:
    case ErrorKind::integrity:
      return 3;
  }
  return 1;
}

}  // namespace kiloland
