#pragma once

#include "keyprop/geometry.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace keyprop {

enum class BodyPart { Head, Backpack };

std::string_view part_name(BodyPart part);
/// Accepts "head" and "backpack" ("body" is an alias for the backpack).
BodyPart parse_part(std::string_view name);

struct MarkerObservation {
  std::string id;
  std::optional<Point3> position;  ///< absent when the marker is not tracked

  bool valid() const { return position.has_value(); }
};

/// All markers seen at one tick of the 100 Hz mo-cap clock.
struct MarkerFrame {
  std::int64_t frame_index = 0;
  std::vector<MarkerObservation> markers;

  const MarkerObservation* find(std::string_view id) const;
  MarkerObservation* find(std::string_view id);
};

/// A tracked rigid object carrying exactly four markers.
struct RigidBodyDef {
  std::string body_id;
  std::string individual_id;
  BodyPart part = BodyPart::Head;
  std::array<Point3, 4> marker_template;   ///< body-local frame, mm
  std::array<std::string, 4> marker_ids;   ///< labels used in marker files, slot order

  /// The six template distances, pairs ordered (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
  std::array<double, 6> pairwise_distances() const;
};

/// Throws InvalidArgument if a backpack template has two pairwise distances
/// closer than `separation_margin_mm` (its pattern would not identify it).
void validate_body(const RigidBodyDef& def, double separation_margin_mm = 1.0);

struct TrackingOptions {
  double residual_threshold_mm = 3.0;
  double repair_tolerance_mm = 5.0;
  double cluster_radius_mm = 120.0;
  double ambiguity_margin_mm = 2.0;
  double stickiness_mm = 50.0;
  /// Clusters whose sorted-distance L2 to every template exceeds this stay unassigned.
  double max_pattern_distance_mm = 15.0;
};

enum class FitStatus { Ok, InsufficientMarkers, HighResidual, Degenerate };

struct PoseFit {
  RigidTransform pose;  ///< body-local -> world
  double residual = 0.0;
  FitStatus status = FitStatus::InsufficientMarkers;

  bool valid() const { return status == FitStatus::Ok; }
};

/// Rigid fit of the body template to the markers named by `assignment`
/// (slot order). Fewer than three valid markers or a residual above the
/// threshold yields an invalid fit, never an exception.
PoseFit fit_body_pose(const MarkerFrame& frame, const RigidBodyDef& def,
                      std::span<const std::string, 4> assignment, double residual_threshold_mm = 3.0);

struct RepairEntry {
  std::int64_t frame_index = 0;
  /// Slot i of the repaired frame takes the marker previously labelled slot permutation[i].
  std::array<int, 4> permutation{0, 1, 2, 3};

  /// 1-based cycle notation, e.g. "(2 3)".
  std::string cycles() const;
};

struct RepairResult {
  std::vector<MarkerFrame> frames;
  std::vector<RepairEntry> log;
  std::vector<std::int64_t> unrepairable;  ///< frames whose body markers were invalidated
};

/// Detects label swaps inside one body by comparing intra-body distances with
/// the template, and relabels with the best of the 24 permutations.
RepairResult repair_labels(std::span<const MarkerFrame> frames, const RigidBodyDef& def,
                           double tolerance_mm = 5.0);

struct MarkerCluster {
  std::vector<std::size_t> members;  ///< indices into MarkerFrame::markers
  Point3 centroid = Point3::Zero();
};

/// Complete-linkage grouping of the valid markers into clusters of at most
/// four, each contained in a ball of `radius_mm` around its centroid.
std::vector<MarkerCluster> cluster_markers(const MarkerFrame& frame, double radius_mm);

struct ClusterAssignment {
  std::string body_id;
  std::array<std::string, 4> marker_ids;  ///< observed labels in template slot order
  Point3 centroid = Point3::Zero();
  double pattern_distance = 0.0;          ///< L2 over sorted pairwise distances, mm
};

/// Matches each 4-marker cluster to the body whose distance pattern is
/// nearest. Injective. Throws AmbiguousIdentity when the two best bodies for a
/// cluster are within the ambiguity margin.
std::vector<ClusterAssignment> identify_individuals(const MarkerFrame& frame, std::span<const RigidBodyDef> defs,
                                                    const TrackingOptions& options = {});

struct TrackedPose {
  std::int64_t frame_index = 0;
  RigidTransform pose;
  double residual = 0.0;
  bool valid = false;
};

struct BodyTrack {
  std::string body_id;
  std::string individual_id;
  BodyPart part = BodyPart::Head;
  std::vector<TrackedPose> poses;  ///< sorted by frame_index

  /// Entry for the frame, or nullptr when the frame is outside the track.
  const TrackedPose* at(std::int64_t frame_index) const;
};

struct TrackingResult {
  std::vector<BodyTrack> tracks;  ///< one per definition, in definition order
  std::vector<std::string> warnings;
};

/// Per-frame identification with temporal stickiness followed by pose fitting.
TrackingResult track_sequence(std::span<const MarkerFrame> frames, std::span<const RigidBodyDef> defs,
                              const TrackingOptions& options = {});

}  // namespace keyprop
