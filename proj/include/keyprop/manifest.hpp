#pragma once

#include "keyprop/annotation.hpp"
#include "keyprop/sync.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace keyprop {

namespace fs = std::filesystem;

struct CameraEntry {
  std::string id;
  fs::path calibration;  ///< camera JSON (intrinsics always, extrinsic once calibrated)
  fs::path frames;       ///< directory of frame_NNNNNN.png/.jpg; optional
  fs::path intensity;    ///< LED intensity trace; optional
  std::optional<ClockMap> clock;
};

/// One recording session. Relative paths in the file are resolved against
/// the manifest's directory; absolute paths are kept.
struct SequenceManifest {
  fs::path source;  ///< the manifest file itself
  std::string sequence_id;
  double mocap_rate = 100.0;
  double video_rate = 30.0;
  std::int64_t video_frames = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> individuals;

  fs::path markers;
  fs::path bodies;
  fs::path sync_counts;         ///< optional
  fs::path annotations;         ///< manual clicks; optional
  fs::path calibration_clicks;  ///< optional
  fs::path predictions;         ///< detector output; optional
  fs::path tracks;              ///< written by `track`
  fs::path templates;           ///< directory written by `template`
  std::vector<CameraEntry> cameras;

  const CameraEntry& camera(const std::string& id) const;
  /// The clock of the given camera, or the first camera's when empty.
  /// Throws InvalidManifest when it has not been synchronized.
  const ClockMap& clock(const std::string& camera_id = {}) const;

  fs::path template_path(const std::string& individual_id) const;
};

/// Parses and validates: rates positive, ids unique, every camera has a
/// calibration file, and every input path that is named exists.
/// Throws InvalidManifest, MissingFile or ParseError.
SequenceManifest load_manifest(const fs::path& path);

/// Serializes with paths relative to the manifest's directory where possible.
std::string format_manifest(const SequenceManifest& manifest);
void save_manifest(const SequenceManifest& manifest);

/// Reads every camera's calibration file in manifest order.
std::vector<Camera> load_cameras(const SequenceManifest& manifest);

}  // namespace keyprop
