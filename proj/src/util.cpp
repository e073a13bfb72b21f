#include "xem/error.hpp"
#include "xem/util.hpp"

#include <cstdio>

namespace xem {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kUniqueness: return "uniqueness";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kLookup: return "lookup";
    case ErrorCode::kTrainingSet: return "training_set";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kSampling: return "sampling";
    case ErrorCode::kStaleness: return "staleness";
    case ErrorCode::kUniverse: return "universe";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kPrecondition: return "precondition";
    case ErrorCode::kMissingArtifact: return "missing_artifact";
    case ErrorCode::kFingerprint: return "fingerprint";
  }
  return "unknown";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace xem
