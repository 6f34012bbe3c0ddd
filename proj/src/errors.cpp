#include "probetraj/errors.hpp"

namespace probetraj {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCorruption: return "corruption error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kEmptySet: return "empty-set error";
    case ErrorKind::kDegenerateDirection: return "degenerate-direction error";
    case ErrorKind::kProjectedDegenerate: return "projected-degenerate error";
    case ErrorKind::kRankZero: return "rank-zero error";
    case ErrorKind::kInsufficientData: return "insufficient-data error";
    case ErrorKind::kDegenerateSplit: return "degenerate-split error";
    case ErrorKind::kMissingPopulation: return "missing-population error";
    case ErrorKind::kWindow: return "window error";
    case ErrorKind::kUndefinedCorrelation: return "undefined-correlation error";
    case ErrorKind::kArgument: return "argument error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

CorruptionError::CorruptionError(std::size_t byte_offset, const std::string& message)
    : Error(ErrorKind::kCorruption, message + " (at byte offset " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

RecordError::RecordError(ErrorKind kind, std::size_t record_index, const std::string& message)
    : Error(kind, "record " + std::to_string(record_index) + ": " + message),
      record_index_(record_index) {}

}  // namespace probetraj
