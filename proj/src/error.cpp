#include "recurdet/error.hpp"

namespace recurdet {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVariancePatch: return "ZeroVariancePatch";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kConstantMap: return "ConstantMap";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kDegenerateBox: return "DegenerateBox";
    case ErrorCode::kNoRecurrence: return "NoRecurrence";
    case ErrorCode::kZeroMass: return "ZeroMass";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kEmptyCluster: return "EmptyCluster";
    case ErrorCode::kTooFewClusters: return "TooFewClusters";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kWrongPhase: return "WrongPhase";
    case ErrorCode::kInsufficientClusters: return "InsufficientClusters";
    case ErrorCode::kIncompleteResponse: return "IncompleteResponse";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace recurdet
