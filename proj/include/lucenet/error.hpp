#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lucenet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the tape (second backward, detached root, ...).
class AutodiffError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file. `kind()` names the failure class so callers
/// can tell a truncated payload from a version mismatch.
class FormatError : public Error {
 public:
  enum class Kind {
    io,
    bad_magic,
    version_mismatch,
    truncated_payload,
    shape_mismatch,
    config_mismatch,
    malformed,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A referenced input file does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

/// Train/validation overlap detected at runtime.
class LeakageError : public Error {
 public:
  using Error::Error;
};

/// Failure inside one cross-validation fold. `fold()` is 0-based; the message
/// numbers folds from 1 like the reports do.
class FoldError : public Error {
 public:
  FoldError(std::size_t fold, const std::string& what)
      : Error("fold " + std::to_string(fold + 1) + ": " + what), fold_(fold) {}

  std::size_t fold() const noexcept { return fold_; }

 private:
  std::size_t fold_;
};

}  // namespace lucenet
