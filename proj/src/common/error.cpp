#include "provchain/common/error.hpp"

namespace provchain {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDuplicateAsset: return "duplicate-asset";
    case ErrorCode::kUnknownParent: return "unknown-parent";
    case ErrorCode::kPermissionDenied: return "permission-denied";
    case ErrorCode::kStaleParent: return "stale-parent";
    case ErrorCode::kInvalidProof: return "invalid-proof";
    case ErrorCode::kInvalidBlock: return "invalid-block";
    case ErrorCode::kInsufficientDepth: return "insufficient-depth";
    case ErrorCode::kDecode: return "decode";
    case ErrorCode::kKey: return "key";
    case ErrorCode::kConnection: return "connection";
    case ErrorCode::kRejected: return "rejected";
    case ErrorCode::kInsufficientFunds: return "insufficient-funds";
    case ErrorCode::kIncompatibleNetwork: return "incompatible-network";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace provchain
