#pragma once

#include "keyprop/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace keyprop {

struct MarkerClick {
  std::string marker_id;
  Pixel pixel;
  Point3 world;  ///< marker position at the synchronized mo-cap frame
};

/// Clicked marker pixels in one video frame of one camera.
struct ExtrinsicObservation {
  std::string camera_id;
  std::int64_t video_frame = 0;
  std::vector<MarkerClick> clicks;
};

struct CalibrationOptions {
  double min_extent_mm = 200.0;
  double max_rms_px = 5.0;
};

struct CalibrationReport {
  double rms_px = 0.0;
  std::vector<double> per_observation_rms_px;  ///< same order as the input observations
  std::array<double, 3> principal_extents_mm{};  ///< descending
  std::size_t correspondences = 0;
};

struct CalibrationResult {
  CameraModel camera;
  CalibrationReport report;
};

/// Extent of the point set along each principal axis, largest first.
std::array<double, 3> principal_extents(std::span<const Point3> points);

/// Pools every click into one PnP solve with the intrinsics held fixed.
/// Throws PoorCoverage when any principal extent is at most
/// options.min_extent_mm, HighReprojection when the RMS exceeds options.max_rms_px.
CalibrationResult calibrate_extrinsics(std::span<const ExtrinsicObservation> observations,
                                       const Intrinsics& intrinsics, const CalibrationOptions& options = {});

}  // namespace keyprop
