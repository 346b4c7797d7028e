#pragma once

#include <cstdint>
#include <exception>
#include <string>

namespace rece {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Dimension,  // operand shapes disagree
  Alignment,  // two layer sets do not describe the same layers
  Format,     // tensor file or embedding table is malformed
  Io,
  Selection,  // tensor selection or label lookup found nothing usable
  Singular,   // a required linear system has no unique solution
};

class Error : public std::exception {
 public:
  Error(ErrorKind kind, std::string message);

  ErrorKind kind() const noexcept { return kind_; }
  const char* what() const noexcept override { return full_.c_str(); }
  const std::string& message() const noexcept { return message_; }

  /// Prefixes the message with where the failure happened, e.g. "epoch 3".
  /// Call from a catch block and rethrow with `throw;` to keep the dynamic type.
  void add_context(const std::string& context);

 private:
  ErrorKind kind_;
  std::string message_;
  std::string full_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(std::string message)
      : Error(ErrorKind::Dimension, std::move(message)) {}
};

class AlignmentError : public Error {
 public:
  explicit AlignmentError(std::string message)
      : Error(ErrorKind::Alignment, std::move(message)) {}
};

class IoError : public Error {
 public:
  explicit IoError(std::string message) : Error(ErrorKind::Io, std::move(message)) {}
};

class SelectionError : public Error {
 public:
  explicit SelectionError(std::string message)
      : Error(ErrorKind::Selection, std::move(message)) {}
};

enum class FormatErrorCode {
  Truncated,
  MalformedHeader,
  OffsetOutOfRange,
  OverlappingRanges,
  UnsupportedDtype,
  SizeMismatch,
  InvalidValue,
};

const char* to_string(FormatErrorCode code);

class FormatError : public Error {
 public:
  FormatError(FormatErrorCode code, std::string message);
  FormatErrorCode code() const noexcept { return code_; }

 private:
  FormatErrorCode code_;
};

/// Raised instead of falling back to a pseudo-inverse.
class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::string what_matrix, std::int64_t rank, std::int64_t dim);

  std::int64_t rank() const noexcept { return rank_; }
  std::int64_t dim() const noexcept { return dim_; }
  std::int64_t rank_defect() const noexcept { return dim_ - rank_; }

 private:
  std::int64_t rank_;
  std::int64_t dim_;
};

}  // namespace rece
