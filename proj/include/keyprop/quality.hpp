#pragma once

#include "keyprop/geometry.hpp"
#include "keyprop/keypoints.hpp"

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace keyprop {

/// A detector output consumed from file.
struct PredictionRecord {
  std::int64_t video_frame = 0;
  std::string individual;
  std::string camera;
  Keypoint keypoint = Keypoint::Beak;
  Pixel pixel = Pixel::Zero();
  double confidence = 1.0;
};

// --- outlier filtering ------------------------------------------------------

struct GesdOptions {
  double max_outlier_fraction = 0.20;
  double alpha = 0.05;
};

/// Rosner's generalized extreme Studentized deviate test (two-sided) with
/// at most ceil(max_outlier_fraction * n) outliers. Returns sorted indices.
/// Throws TooFewSamples for n <= 10, InvalidArgument for a fraction outside (0, 0.5).
std::vector<std::size_t> gesd_outliers(std::span<const double> values, const GesdOptions& options = {});

/// Critical value lambda_i for the i-th (1-based) removal out of n samples.
double gesd_critical_value(std::size_t n, std::size_t i, double alpha);

/// One annotated instance: a frame of one individual seen by one camera.
struct FrameKey {
  std::int64_t frame = 0;
  std::string individual;
  std::string camera;

  auto operator<=>(const FrameKey&) const = default;
};

struct KeypointError {
  FrameKey key;
  Keypoint keypoint = Keypoint::Beak;
  double error = 0.0;  ///< prediction-vs-annotation distance
};

struct FilterResult {
  std::vector<FrameKey> kept;
  std::vector<FrameKey> dropped;
  PerKeypoint<std::size_t> flagged{};  ///< outliers found per keypoint

  double drop_fraction() const;
};

/// GESD per keypoint over all instances; an instance is dropped when at
/// least `min_flagged` of its keypoints are outliers. Keypoints with ten or
/// fewer samples are not tested.
FilterResult filter_frames(std::span<const KeypointError> errors, const GesdOptions& options = {},
                           int min_flagged = 2);

/// Runs of consecutive dropped frames, binned as 1 / 2-30 / more than 30.
struct GapHistogram {
  std::size_t single = 0;
  std::size_t short_runs = 0;
  std::size_t long_runs = 0;

  std::size_t total() const { return single + short_runs + long_runs; }
  /// Share of runs no longer than 30 frames; 1 when there are none.
  double fraction_at_most_30() const;
  GapHistogram& operator+=(const GapHistogram& other);
  bool operator==(const GapHistogram&) const = default;
};

/// `dropped` must be sorted ascending; duplicates are ignored.
GapHistogram gap_statistics(std::span<const std::int64_t> dropped);

// --- accuracy metrics -------------------------------------------------------

template <int Dim>
struct KeyedPoint {
  FrameKey key;
  Keypoint keypoint = Keypoint::Beak;
  Eigen::Matrix<double, Dim, 1> position;
};

using KeyedPixel = KeyedPoint<2>;
using KeyedPoint3 = KeyedPoint<3>;

struct KeypointMetric {
  std::size_t count = 0;
  double value = 0.0;
};

using MetricReport = PerKeypoint<std::optional<KeypointMetric>>;

/// Root mean squared Euclidean distance per keypoint over pairs matched on
/// (frame key, keypoint). Throws NoMatchedPairs.
template <int Dim>
MetricReport rmse_report(std::span<const KeyedPoint<Dim>> predictions, std::span<const KeyedPoint<Dim>> annotations);

/// Fraction of matched pairs closer than threshold x bbox width, one report
/// per threshold. Pairs without a positive width are skipped. Throws NoMatchedPairs.
std::vector<MetricReport> pck_report(std::span<const KeyedPixel> predictions, std::span<const KeyedPixel> annotations,
                                     const std::map<FrameKey, double>& bbox_widths,
                                     std::span<const double> thresholds);

// --- pose variation ---------------------------------------------------------

struct PoseOrientation {
  BodyPart part = BodyPart::Head;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  std::array<double, 3> angles_deg{};  ///< to the world x, y, z axes, in [0, 180]
};

/// Plane through beak and eyes (head) or tail and shoulders (body), normal =
/// (left - origin) x (right - origin). Throws DegeneratePlane for collinear
/// points, InvalidArgument when a required keypoint is missing.
PoseOrientation pose_orientation(const PerKeypoint<std::optional<Point3>>& keypoints, BodyPart part);

struct PoseSample {
  std::optional<PoseOrientation> head;
  std::optional<PoseOrientation> body;
};

struct UniquePoseCounts {
  std::size_t head = 0;
  std::size_t body = 0;
  std::size_t combined = 0;  ///< distinct co-occurring (head, body) bins
};

/// Angle bin index; tolerant of round-off just below a bin edge.
std::array<int, 3> quantize_angles(const std::array<double, 3>& angles_deg, double bin_deg = 1.0);

UniquePoseCounts count_unique_poses(std::span<const PoseSample> samples, double bin_deg = 1.0);

}  // namespace keyprop
