#include "starnet/error.hpp"

namespace starnet {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDegenerateBox: return "degenerate box";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kBadFormat: return "bad format";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kFeatureDimMismatch: return "feature dim mismatch";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kNumerical: return "numerical error";
    case ErrorCode::kInfeasible: return "infeasible";
  }
  return "unknown";
}

}  // namespace starnet
