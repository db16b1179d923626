#pragma once

#include "keyprop/annotation.hpp"
#include "keyprop/io.hpp"
#include "keyprop/quality.hpp"
#include "keyprop/sync.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace keyprop::synth {

namespace fs = std::filesystem;

/// Knobs of the synthetic capture. Everything random is drawn from `seed`.
struct SceneOptions {
  std::uint64_t seed = 1;
  int individuals = 2;
  std::int64_t video_frames = 1000;

  // Clock: mo-cap frame = clock_offset + (10/3)(1 + drift) x video frame.
  double clock_offset = 137.0;
  double drift = 0.0;
  double flash_deletion = 0.0;  ///< share of interior flashes removed, per stream

  int annotated_frames = 5;     ///< frames clicked in every view for the template
  double click_noise_px = 0.0;
  double occlusion = 0.0;       ///< chance that a manual click is marked occluded

  int calibration_frames = 30;
  double calibration_noise_px = 1.0;

  double prediction_noise_px = 0.0;
  double corruption = 0.0;          ///< share of instances whose head predictions are displaced
  double corruption_px = 60.0;      ///< displacement size, drawn from [1, 2] x this

  int label_swaps = 0;              ///< frames with two markers of one body swapped
  bool images = true;               ///< write frame images for the annotated frames
};

/// Ground truth and generated inputs.
struct Scene {
  SceneOptions options;
  std::vector<Camera> cameras;
  std::vector<std::string> individuals;
  std::vector<RigidBodyDef> bodies;          ///< head then backpack, per individual
  std::vector<KeypointTemplate> templates;   ///< true offsets, no spread
  std::vector<BodyTrack> poses;              ///< true pose at every mo-cap frame
  std::vector<MarkerFrame> markers;          ///< observed (possibly label-swapped)
  std::vector<std::int64_t> swapped_frames;
  ClockMap clock;                            ///< true video -> mo-cap map

  IntensitySignal intensity;                 ///< shared by every camera
  std::vector<int> sync_counts;
  std::vector<std::int64_t> video_flashes;   ///< true onsets, before deletion
  std::vector<std::int64_t> mocap_flashes;

  std::vector<std::int64_t> annotated;       ///< video frames clicked by the "annotator"
  std::vector<ManualAnnotation> clicks;
  std::vector<io::RawObservation> calibration_clicks;

  std::vector<PredictionRecord> predictions;
  std::vector<FrameKey> corrupted;           ///< sorted

  /// World keypoints of an individual at a video frame, via the true clock.
  PerKeypoint<Point3> keypoints_at(std::size_t individual, std::int64_t video_frame) const;
};

Scene generate(const SceneOptions& options);

/// World keypoints from a template and the two part poses.
PerKeypoint<Point3> place_keypoints(const KeypointTemplate& keypoint_template, const RigidTransform& head,
                                    const RigidTransform& backpack);

/// The four rig cameras: one per arena corner, about 2 m up, looking at the centre.
std::vector<Camera> rig_cameras();

/// Writes inputs, truth files and `manifest.toml` (with the true clock) into `dir`.
/// Truth lands in `dir/truth` in the annotation output format.
void write_scene(const Scene& scene, const fs::path& dir);

}  // namespace keyprop::synth
