#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace retinareg {

enum class ErrorCode {
  kDegeneratePoint,
  kInsufficientPoints,
  kDegenerateConfiguration,
  kWrongCount,
  kImageTooSmall,
  kIoError,
  kFormatError,
  kBadFactor,
  kDimensionMismatch,
  kOutOfBounds,
  kInsufficientMatches,
  kNoModel,
  kBatchTooSmall,
  kEmptyStratum,
  kIndivisibleBatch,
  kEmptyDataset,
  kEmptyInput,
  kInvalidCounts,
  kMissingAnnotation,
  kSchemaError,
  kBoundsError,
  kAllPointsCropped,
  kConfigError,
  kMissingLink,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace retinareg
