#include "keyprop/error.hpp"

namespace keyprop {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "geometry.NonFinite";
    case ErrorCode::DegenerateConfiguration: return "geometry.DegenerateConfiguration";
    case ErrorCode::DegenerateGeometry: return "geometry.DegenerateGeometry";
    case ErrorCode::InsufficientMarkers: return "mocap.InsufficientMarkers";
    case ErrorCode::Unrepairable: return "mocap.Unrepairable";
    case ErrorCode::AmbiguousIdentity: return "mocap.AmbiguousIdentity";
    case ErrorCode::NoFlashesDetected: return "synchronizer.NoFlashesDetected";
    case ErrorCode::IrregularPeriod: return "synchronizer.IrregularPeriod";
    case ErrorCode::InsufficientMatches: return "synchronizer.InsufficientMatches";
    case ErrorCode::ResidualTooHigh: return "synchronizer.ResidualTooHigh";
    case ErrorCode::RateMismatch: return "synchronizer.RateMismatch";
    case ErrorCode::PoorCoverage: return "calibration.PoorCoverage";
    case ErrorCode::HighReprojection: return "calibration.HighReprojection";
    case ErrorCode::InsufficientViews: return "annotation.InsufficientViews";
    case ErrorCode::InvalidPose: return "annotation.InvalidPose";
    case ErrorCode::NoVisibleKeypoints: return "annotation.NoVisibleKeypoints";
    case ErrorCode::TooFewSamples: return "quality.TooFewSamples";
    case ErrorCode::NoMatchedPairs: return "quality.NoMatchedPairs";
    case ErrorCode::DegeneratePlane: return "quality.DegeneratePlane";
    case ErrorCode::InfeasibleSpec: return "hybrid.InfeasibleSpec";
    case ErrorCode::BoundaryGap: return "hybrid.BoundaryGap";
    case ErrorCode::ParseError: return "io.ParseError";
    case ErrorCode::MissingFile: return "io.MissingFile";
    case ErrorCode::InvalidManifest: return "pipeline.InvalidManifest";
    case ErrorCode::InvalidArgument: return "pipeline.InvalidArgument";
  }
  return "unknown";
}

}  // namespace keyprop
