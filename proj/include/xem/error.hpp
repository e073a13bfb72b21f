#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xem {

enum class ErrorCode {
  kSchema,
  kUniqueness,
  kParse,
  kConfig,
  kShape,
  kLookup,
  kTrainingSet,
  kDivergence,
  kSampling,
  kStaleness,
  kUniverse,
  kIo,
  kPrecondition,
  kMissingArtifact,
  kFingerprint,
};

std::string_view error_code_name(ErrorCode code);

// All library failures are reported through this type; `code()` drives the
// CLI's machine-readable error line and the service's HTTP status mapping.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace xem
