#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace keyprop {

/// Failure codes, grouped by the module that raises them.
enum class ErrorCode {
  // geometry
  NonFinite,
  DegenerateConfiguration,
  DegenerateGeometry,
  // mocap
  InsufficientMarkers,
  Unrepairable,
  AmbiguousIdentity,
  // synchronizer
  NoFlashesDetected,
  IrregularPeriod,
  InsufficientMatches,
  ResidualTooHigh,
  RateMismatch,
  // calibration
  PoorCoverage,
  HighReprojection,
  // annotation
  InsufficientViews,
  InvalidPose,
  NoVisibleKeypoints,
  // quality
  TooFewSamples,
  NoMatchedPairs,
  DegeneratePlane,
  // hybrid
  InfeasibleSpec,
  BoundaryGap,
  // io / pipeline
  ParseError,
  MissingFile,
  InvalidManifest,
  InvalidArgument,
};

/// Module-qualified name, e.g. "synchronizer.NoFlashesDetected".
std::string_view code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace keyprop
