#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace recurdet {

enum class ErrorCode {
  kZeroVariancePatch,
  kImageTooSmall,
  kConstantMap,
  kDimensionMismatch,
  kDegenerateBox,
  kNoRecurrence,
  kZeroMass,
  kEmptyGraph,
  kEmptyCluster,
  kTooFewClusters,
  kSingleClass,
  kWrongPhase,
  kInsufficientClusters,
  kIncompleteResponse,
  kPlacementFailure,
  kInvalidConfig,
  kIo,
};

/// Stable identifier used in reports and HTTP error bodies, e.g. "NoRecurrence".
std::string_view error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// A stage failure inside the end-to-end pipeline; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace recurdet
