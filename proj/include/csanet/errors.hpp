#ifndef CSANET_ERRORS_HPP_
#define CSANET_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace csanet {

enum class ErrorKind { Input, Data, Numerical, Integrity };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Bad arguments to an operation: shapes, ranges, empty inputs.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::Input, what) {}
};

/// Problems with files and records on disk (parse failures, dangling ids).
class DataError : public Error {
 public:
  enum class Code { Io, Parse, DanglingReference, DimensionMismatch, Validation };
  DataError(Code code, const std::string& what)
      : Error(ErrorKind::Data, what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::Numerical, what) {}
};

/// Checksum or structural corruption in a persisted artifact.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what)
      : Error(ErrorKind::Integrity, what) {}
};

}  // namespace csanet

#endif  // CSANET_ERRORS_HPP_
