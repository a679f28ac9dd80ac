#include "retinareg/error.hpp"

namespace retinareg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegeneratePoint: return "DegeneratePoint";
    case ErrorCode::kInsufficientPoints: return "InsufficientPoints";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kWrongCount: return "WrongCount";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kBadFactor: return "BadFactor";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kInsufficientMatches: return "InsufficientMatches";
    case ErrorCode::kNoModel: return "NoModel";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kEmptyStratum: return "EmptyStratum";
    case ErrorCode::kIndivisibleBatch: return "IndivisibleBatch";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidCounts: return "InvalidCounts";
    case ErrorCode::kMissingAnnotation: return "MissingAnnotation";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kBoundsError: return "BoundsError";
    case ErrorCode::kAllPointsCropped: return "AllPointsCropped";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kMissingLink: return "MissingLink";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace retinareg
