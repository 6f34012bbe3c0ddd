#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace probetraj {

enum class ErrorKind {
  kIo,
  kFormat,
  kCorruption,
  kValidation,
  kDimension,
  kEmptySet,
  kDegenerateDirection,
  kProjectedDegenerate,
  kRankZero,
  kInsufficientData,
  kDegenerateSplit,
  kMissingPopulation,
  kWindow,
  kUndefinedCorrelation,
  kArgument,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports on bad input is an Error. Anything else
// escaping the library is a bug.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class CorruptionError : public Error {
 public:
  CorruptionError(std::size_t byte_offset, const std::string& message);

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class RecordError : public Error {
 public:
  RecordError(ErrorKind kind, std::size_t record_index, const std::string& message);

  std::size_t record_index() const noexcept { return record_index_; }

 private:
  std::size_t record_index_;
};

}  // namespace probetraj
