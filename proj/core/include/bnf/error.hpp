#pragma once

#include <stdexcept>
#include <string>

namespace bnf {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range index, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Floating-point breakdown or a violated model invariant detected at run time.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its content is rejected: wrong version, hash mismatch,
/// malformed record, or a model that fails its invariants.
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Invalid experiment or training configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}
}  // namespace detail

}  // namespace bnf
