#ifndef NCLKIT_ERROR_HPP_
#define NCLKIT_ERROR_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace nclkit {

enum class ErrorKind {
  kInvalidArgument,
  kDimensionMismatch,
  kZeroVector,
  kDegenerateMatrix,
  kNonFinite,
  kBatchTooSmall,
  kEmptyQueue,
  kModalityMismatch,
  kMissingGroundTruth,
  kIo,
  kFormat,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind()` distinguishes failure
// classes so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  // Offending row/column/instance, when the failure is tied to one.
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

}  // namespace nclkit

#endif  // NCLKIT_ERROR_HPP_
