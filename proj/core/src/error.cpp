#include "rece/error.hpp"

namespace rece {

Error::Error(ErrorKind kind, std::string message)
    : kind_(kind), message_(std::move(message)), full_(message_) {}

void Error::add_context(const std::string& context) {
  full_ = context + ": " + full_;
}

const char* to_string(FormatErrorCode code) {
  switch (code) {
    case FormatErrorCode::Truncated: return "truncated file";
    case FormatErrorCode::MalformedHeader: return "malformed header";
    case FormatErrorCode::OffsetOutOfRange: return "offset out of range";
    case FormatErrorCode::OverlappingRanges: return "overlapping data ranges";
    case FormatErrorCode::UnsupportedDtype: return "unsupported dtype";
    case FormatErrorCode::SizeMismatch: return "size mismatch";
    case FormatErrorCode::InvalidValue: return "invalid value";
  }
  return "format error";
}

FormatError::FormatError(FormatErrorCode code, std::string message)
    : Error(ErrorKind::Format, std::string(to_string(code)) + ": " + message),
      code_(code) {}

SingularMatrixError::SingularMatrixError(std::string what_matrix, std::int64_t rank,
                                         std::int64_t dim)
    : Error(ErrorKind::Singular,
            what_matrix + " is singular: numerical rank " + std::to_string(rank) + " of " +
                std::to_string(dim) + " (rank defect " + std::to_string(dim - rank) + ")"),
      rank_(rank),
      dim_(dim) {}

}  // namespace rece
