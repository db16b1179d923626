#pragma once

#include "keyprop/annotation.hpp"
#include "keyprop/calibration.hpp"
#include "keyprop/hybrid.hpp"
#include "keyprop/mocap.hpp"
#include "keyprop/quality.hpp"
#include "keyprop/sync.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace keyprop::io {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
/// Writes to a sibling temporary file, then renames it over `path`.
void write_text_atomic(const fs::path& path, std::string_view content);

// --- cameras ----------------------------------------------------------------

nlohmann::json camera_to_json(const Camera& camera);
Camera camera_from_json(const nlohmann::json& j);
Camera read_camera(const fs::path& path);
void write_camera(const fs::path& path, const Camera& camera);

// --- mo-cap -----------------------------------------------------------------

/// `frame,marker_id,x,y,z,valid`; frames come back sorted by index.
std::vector<MarkerFrame> read_markers(const fs::path& path);
std::string format_markers(std::span<const MarkerFrame> frames);

std::string format_repair_log(std::span<const RepairEntry> log);

std::vector<RigidBodyDef> bodies_from_json(const nlohmann::json& j);
nlohmann::json bodies_to_json(std::span<const RigidBodyDef> defs);

/// `frame,body_id,valid,residual,r00..r22,tx,ty,tz`.
std::string format_tracks(std::span<const BodyTrack> tracks);
/// Rebuilds tracks for the given definitions; bodies absent from the file get empty tracks.
std::vector<BodyTrack> read_tracks(const fs::path& path, std::span<const RigidBodyDef> defs);

// --- synchronization --------------------------------------------------------

/// `frame,intensity`.
IntensitySignal read_intensity(const fs::path& path, double frame_rate);
/// `frame,count`.
std::vector<int> read_marker_counts(const fs::path& path);

// --- calibration clicks -----------------------------------------------------

/// A click before its 3D position is known.
struct RawClick {
  std::string marker_id;
  Pixel pixel;
};

struct RawObservation {
  std::string camera_id;
  std::int64_t video_frame = 0;
  std::vector<RawClick> clicks;
};

std::vector<RawObservation> calibration_clicks_from_json(const nlohmann::json& j);
nlohmann::json calibration_clicks_to_json(std::span<const RawObservation> observations);

// --- manual annotations and templates ----------------------------------------

/// Throws ParseError (unknown keypoint, duplicate click, bad field) on invalid input.
std::vector<ManualAnnotation> annotations_from_json(const nlohmann::json& j);
nlohmann::json annotations_to_json(std::span<const ManualAnnotation> annotations);

nlohmann::json template_to_json(const KeypointTemplate& keypoint_template);
KeypointTemplate template_from_json(const nlohmann::json& j);

// --- propagated annotations ---------------------------------------------------

struct AnnotationFiles {
  std::map<std::string, std::string> per_camera_2d;  ///< camera id -> CSV text
  std::string keypoints_3d;
  std::string boxes;
};

AnnotationFiles format_annotations(std::span<const AnnotatedFrame> frames);

/// Reads `frame,individual,keypoint,u,v,visible`; only visible rows are returned.
std::vector<KeyedPixel> read_keypoints_2d(const fs::path& path, const std::string& camera_id);
/// Reads `frame,individual,keypoint,x,y,z,valid`; only valid rows are returned.
std::vector<KeyedPoint3> read_keypoints_3d(const fs::path& path);
/// Reads `frame,individual,camera,x_min,y_min,x_max,y_max`.
std::map<FrameKey, BoundingBox> read_boxes(const fs::path& path);

// --- predictions --------------------------------------------------------------

/// `frame,individual,camera,keypoint,u,v,confidence`.
std::vector<PredictionRecord> read_predictions(const fs::path& path);
std::string format_predictions(std::span<const PredictionRecord> predictions);

}  // namespace keyprop::io
