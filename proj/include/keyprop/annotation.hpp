#pragma once

#include "keyprop/geometry.hpp"
#include "keyprop/keypoints.hpp"
#include "keyprop/mocap.hpp"
#include "keyprop/sync.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace keyprop {

struct Camera {
  std::string id;
  CameraModel model;
};

/// One human click. Occluded keypoints carry no pixel.
struct ManualAnnotation {
  std::string individual_id;
  std::string camera_id;
  std::int64_t video_frame = 0;
  Keypoint keypoint = Keypoint::Beak;
  std::optional<Pixel> pixel;

  bool occluded() const { return !pixel.has_value(); }
};

struct KeypointEstimate {
  Point3 offset = Point3::Zero();          ///< in the owning body part's local frame, mm
  int samples = 0;
  std::optional<Eigen::Vector3d> spread;  ///< per-axis standard deviation, needs >= 2 samples
};

struct KeypointTemplate {
  std::string individual_id;
  PerKeypoint<std::optional<KeypointEstimate>> keypoints;

  bool usable() const;
};

struct TemplateOptions {
  TriangulationOptions triangulation;
  double high_spread_mm = 5.0;
  double mad_gate = 3.0;
};

struct TemplateEstimate {
  KeypointTemplate keypoint_template;
  std::vector<std::string> warnings;
};

/// Triangulates each clicked keypoint per frame, moves it into the body-part
/// frame given by the track pose at the synchronized mo-cap frame, and
/// averages across frames after dropping samples further than mad_gate x MAD
/// from the median. Only annotations of `head.individual_id` are used.
///
/// Throws InsufficientViews when a keypoint is never clicked in two views of
/// one frame and InvalidPose when every such frame lacks a valid pose.
TemplateEstimate estimate_template(std::span<const ManualAnnotation> annotations, std::span<const Camera> cameras,
                                   const BodyTrack& head, const BodyTrack& backpack, const ClockMap& clock,
                                   const TemplateOptions& options = {});

struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
};

/// Min/max of the visible keypoints grown by `margin_px` on every side and
/// clipped to [0, width] x [0, height]. Empty input gives no box.
std::optional<BoundingBox> bounding_box(std::span<const Pixel> visible, int width, int height,
                                        double margin_px = 60.0);

struct ViewAnnotation {
  std::string camera_id;
  PerKeypoint<Projection> keypoints;
  std::optional<BoundingBox> box;
};

struct IndividualAnnotation {
  std::string individual_id;
  bool valid = false;
  PerKeypoint<Point3> world;  ///< meaningful only when valid
  std::vector<ViewAnnotation> views;  ///< one per camera when valid, empty otherwise
};

struct AnnotatedFrame {
  std::int64_t video_frame = 0;
  std::int64_t mocap_frame = 0;
  std::vector<IndividualAnnotation> individuals;
};

/// Places the template with the two part poses and projects it into every
/// camera. Missing poses mark the individual invalid.
IndividualAnnotation propagate_frame(const KeypointTemplate& keypoint_template,
                                     const std::optional<RigidTransform>& head_pose,
                                     const std::optional<RigidTransform>& backpack_pose,
                                     std::span<const Camera> cameras, double bbox_margin_px = 60.0);

/// Overlap of `box` with `other`, as a fraction of the area of `box`.
double overlap_fraction(const BoundingBox& box, const BoundingBox& other);

/// include[i][v]: individual i has a box in view v and no other individual's
/// box covers more than `max_overlap` of it.
std::vector<std::vector<bool>> filter_training_crops(const AnnotatedFrame& frame, double max_overlap = 0.30);

struct PropagationOptions {
  double bbox_margin_px = 60.0;
  unsigned threads = 0;  ///< 0 picks the hardware concurrency
};

/// Annotates video frames [first_video_frame, first_video_frame + frame_count),
/// each mapped to its nearest mo-cap frame. Output is frame-sorted. Throws
/// InvalidArgument for a template that is not usable.
std::vector<AnnotatedFrame> propagate_sequence(std::span<const KeypointTemplate> templates,
                                               std::span<const BodyTrack> tracks, std::span<const Camera> cameras,
                                               const ClockMap& clock, std::int64_t first_video_frame,
                                               std::int64_t frame_count, const PropagationOptions& options = {});

}  // namespace keyprop
