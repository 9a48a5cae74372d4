#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace retina {

/// Base class of every error raised by the codec library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates an operation's precondition.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A code stream or image file is malformed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Input is well-formed but outside what the codec supports (non-square, 16-bit, ...).
class UnsupportedInput : public Error {
 public:
  using Error::Error;
};

/// Disk I/O failure or an inconsistent block-store manifest.
class StorageError : public Error {
 public:
  using Error::Error;
};

/// A memory or disk budget would be exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Factorization broke down; carries the failing pivot.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t pivot_index, double pivot_value)
      : Error(what + " (pivot " + std::to_string(pivot_index) + " = " + std::to_string(pivot_value) + ")"),
        pivot_index_(pivot_index),
        pivot_value_(pivot_value) {}

  std::size_t pivot_index() const noexcept { return pivot_index_; }
  double pivot_value() const noexcept { return pivot_value_; }

 private:
  std::size_t pivot_index_;
  double pivot_value_;
};

/// A computed result failed a self-check (residual too large, alpha <= 0, ...).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Cached data does not match its recorded checksum.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// An observed energy ratio fell outside [alpha, beta].
class FrameConditionViolated : public ConsistencyError {
 public:
  FrameConditionViolated(const std::string& what, double ratio)
      : ConsistencyError(what + " (ratio " + std::to_string(ratio) + ")"), ratio_(ratio) {}

  double ratio() const noexcept { return ratio_; }

 private:
  double ratio_;
};

}  // namespace retina
