#pragma once

#include "keyprop/annotation.hpp"
#include "keyprop/quality.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace keyprop {

/// 3D keypoints of one individual at one frame; absent entries are gaps.
struct KeypointFrame {
  std::int64_t frame = 0;
  PerKeypoint<std::optional<Point3>> points;
};

/// Consecutive frames of one individual.
using KeypointTrack = std::vector<KeypointFrame>;

struct GapSpec {
  double fraction = 0.25;
  int min_length = 30;
  int max_length = 90;
  std::uint64_t seed = 0;
};

/// Index range [begin, end) into a KeypointTrack.
struct Gap {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  bool operator==(const Gap&) const = default;
};

struct GappedTrack {
  KeypointTrack track;
  std::vector<Gap> gaps;  ///< sorted, disjoint, separated by at least one kept frame
};

/// Removes whole frames in seeded random gaps until the target fraction is
/// reached (within one gap). Gaps never touch the first or last frame.
/// Throws InfeasibleSpec when the gaps cannot fit.
GappedTrack introduce_gaps(const KeypointTrack& track, const GapSpec& spec);

struct FillResult {
  KeypointTrack track;
  std::vector<std::pair<std::int64_t, Keypoint>> unfilled;  ///< (frame, keypoint) lacking two views
};

/// Triangulates the individual's 2D detections in every gap frame.
FillResult fill_triangulation(const GappedTrack& gapped, std::span<const PredictionRecord> predictions,
                              std::span<const Camera> cameras, const std::string& individual,
                              const TriangulationOptions& options = {});

/// Per-axis linear interpolation between the frames bounding each gap.
/// Throws BoundaryGap when a gap touches either end of the track.
KeypointTrack fill_linear(const GappedTrack& gapped);

struct FillComparison {
  std::vector<std::string> methods;
  std::vector<MetricReport> rmse_mm;  ///< parallel to methods
};

/// Per-keypoint RMSE of each fill against the truth, over gap frames only.
FillComparison compare_fills(const KeypointTrack& truth,
                             std::span<const std::pair<std::string, KeypointTrack>> fills,
                             std::span<const Gap> gaps);

}  // namespace keyprop
