#include "nclkit/error.hpp"

namespace nclkit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kZeroVector: return "ZeroVector";
    case ErrorKind::kDegenerateMatrix: return "DegenerateMatrix";
    case ErrorKind::kNonFinite: return "NonFinite";
    case ErrorKind::kBatchTooSmall: return "BatchTooSmall";
    case ErrorKind::kEmptyQueue: return "EmptyQueue";
    case ErrorKind::kModalityMismatch: return "ModalityMismatch";
    case ErrorKind::kMissingGroundTruth: return "MissingGroundTruth";
    case ErrorKind::kIo: return "Io";
    case ErrorKind::kFormat: return "Format";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      index_(index) {}

}  // namespace nclkit
