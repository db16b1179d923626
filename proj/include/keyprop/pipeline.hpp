#pragma once

// File-level steps shared by the command-line tool and the HTTP service.
// Each step reads what the manifest names, writes its artifacts, and
// returns a JSON report; `table` fields hold the human-readable version.

#include "keyprop/annotation.hpp"
#include "keyprop/calibration.hpp"
#include "keyprop/manifest.hpp"
#include "keyprop/quality.hpp"
#include "keyprop/sync.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace keyprop::pipeline {

struct Report {
  nlohmann::json json;
  std::string table;
};

/// Recomputes every camera's clock map and stores it in the manifest file.
Report synchronize(SequenceManifest& manifest, const FlashOptions& flash = {}, const ClockOptions& clock = {});

/// Solves the extrinsics of the listed cameras (all when empty) from the
/// calibration clicks and rewrites their calibration files.
Report calibrate(const SequenceManifest& manifest, const std::vector<std::string>& camera_ids,
                 const CalibrationOptions& options = {});

/// Repairs label swaps body by body, writes the repaired marker file and the
/// log, and points the manifest at the repaired file.
Report repair(SequenceManifest& manifest, const fs::path& markers_out, const fs::path& log_out,
              double tolerance_mm = 5.0);

/// Tracks every body and writes the manifest's tracks file.
Report track(const SequenceManifest& manifest, const TrackingOptions& options = {});

/// Tracks from the tracks file, or computed from the markers when it is absent.
std::vector<BodyTrack> load_tracks(const SequenceManifest& manifest);

struct TemplateBuild {
  std::vector<TemplateEstimate> estimates;
  Report report;
};

/// Estimates the templates of the listed individuals (all with clicks when
/// empty) and writes one file per individual into the templates directory.
TemplateBuild build_templates(const SequenceManifest& manifest, const std::vector<std::string>& individuals = {},
                              const TemplateOptions& options = {});

/// The exact bytes written for a template file.
std::string template_text(const KeypointTemplate& keypoint_template);
std::vector<KeypointTemplate> load_templates(const SequenceManifest& manifest);

/// Propagates templates over video frames [first, first + count) (the whole
/// sequence when count < 0) and writes the annotation CSVs into `out_dir`.
Report propagate(const SequenceManifest& manifest, const fs::path& out_dir, std::int64_t first = 0,
                 std::int64_t count = -1, const PropagationOptions& options = {});

/// Prediction-vs-annotation errors, GESD filtering and drop-gap histogram.
Report qa_filter(const fs::path& predictions, const fs::path& annotation_dir, const GesdOptions& options = {},
                 int min_flagged = 2);

struct MetricsInputs {
  fs::path reference_dir;                 ///< annotation CSVs taken as ground truth
  std::optional<fs::path> predicted_dir;  ///< annotation CSVs to score, or
  std::optional<fs::path> predictions;    ///< a prediction CSV to score
  std::vector<double> pck_thresholds{0.05, 0.10};
};

/// Per-keypoint 2D RMSE, PCK at each threshold, and 3D RMSE when both sides have 3D.
Report metrics(const MetricsInputs& inputs);

/// Unique head/body orientation counts over a 3D annotation file.
Report pose_variation(const fs::path& keypoints_3d, double bin_deg = 1.0);

/// Runs the gap-filling comparison described by a TOML config (keys: seed,
/// fraction, min_length, max_length, manifest, truth, predictions,
/// individuals, output). A seed override replaces the config's.
Report hybrid_experiment(const fs::path& config, std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace keyprop::pipeline
