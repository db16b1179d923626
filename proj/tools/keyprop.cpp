// keyprop: command-line front end for the annotation pipeline.

#include "keyprop/error.hpp"
#include "keyprop/io.hpp"
#include "keyprop/manifest.hpp"
#include "keyprop/pipeline.hpp"
#include "keyprop/service.hpp"
#include "keyprop/synth.hpp"
#include "keyprop/toml_lite.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using namespace keyprop;

namespace {

struct Output {
  bool json = false;
  std::string out;

  void emit(const pipeline::Report& report) const {
    if (!out.empty()) io::write_text_atomic(out, report.json.dump(2) + "\n");
    if (json) {
      std::cout << report.json.dump(2) << "\n";
    } else {
      std::cout << report.table;
    }
  }
};

void add_output(CLI::App* cmd, Output& output) {
  cmd->add_flag("--json", output.json, "Print the JSON report instead of the table");
  cmd->add_option("--out", output.out, "Also write the JSON report to this file");
}

void error_exit(std::string_view code, const std::string& message, int status) {
  const nlohmann::json body = {{"error", {{"code", code}, {"message", message}}}};
  std::cerr << body.dump() << "\n";
  std::exit(status);
}

Service* g_service = nullptr;
extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

synth::SceneOptions scene_options(const std::string& config) {
  synth::SceneOptions o;
  if (config.empty()) return o;
  const auto doc = toml_lite::parse(io::read_text(config));
  try {
    o.seed = doc.value("seed", o.seed);
    o.individuals = doc.value("individuals", o.individuals);
    o.video_frames = doc.value("video_frames", o.video_frames);
    o.clock_offset = doc.value("clock_offset", o.clock_offset);
    o.drift = doc.value("drift", o.drift);
    o.flash_deletion = doc.value("flash_deletion", o.flash_deletion);
    o.annotated_frames = doc.value("annotated_frames", o.annotated_frames);
    o.click_noise_px = doc.value("click_noise_px", o.click_noise_px);
    o.occlusion = doc.value("occlusion", o.occlusion);
    o.calibration_frames = doc.value("calibration_frames", o.calibration_frames);
    o.calibration_noise_px = doc.value("calibration_noise_px", o.calibration_noise_px);
    o.prediction_noise_px = doc.value("prediction_noise_px", o.prediction_noise_px);
    o.corruption = doc.value("corruption", o.corruption);
    o.corruption_px = doc.value("corruption_px", o.corruption_px);
    o.label_swaps = doc.value("label_swaps", o.label_swaps);
    o.images = doc.value("images", o.images);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("{}: {}", config, e.what()));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Propagate sparse keypoint clicks into dense multi-view annotations using mo-cap poses"};
  app.require_subcommand(1);
  Output output;
  std::string manifest_path;
  auto add_manifest = [&](CLI::App* cmd) {
    cmd->add_option("-m,--manifest", manifest_path, "Sequence manifest (TOML)")->required()->check(CLI::ExistingFile);
  };

  // sync
  auto* sync = app.add_subcommand("sync", "Fit each camera's clock map from flash traces and store it in the manifest");
  add_manifest(sync);
  add_output(sync, output);
  FlashOptions flash;
  ClockOptions clock;
  sync->add_option("--jump", flash.intensity_jump, "Intensity rise that marks a flash onset")->capture_default_str();
  sync->add_option("--period", flash.period_s, "Flash onset-to-onset period, seconds")->capture_default_str();
  sync->add_option("--max-residual", clock.max_residual_frames, "Clock fit residual gate, mo-cap frames")
      ->capture_default_str();

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Solve camera extrinsics from clicked mo-cap markers");
  add_manifest(calibrate);
  add_output(calibrate, output);
  std::vector<std::string> camera_ids;
  CalibrationOptions calib;
  calibrate->add_option("--camera", camera_ids, "Camera to calibrate (repeatable; default all)");
  calibrate->add_option("--min-extent", calib.min_extent_mm, "Coverage gate, mm")->capture_default_str();
  calibrate->add_option("--max-rms", calib.max_rms_px, "Reprojection gate, px")->capture_default_str();

  // repair
  auto* repair = app.add_subcommand("repair", "Fix swapped marker labels and point the manifest at the result");
  add_manifest(repair);
  add_output(repair, output);
  std::string repaired = "markers_repaired.csv";
  std::string log_dir = "repair_log";
  double tolerance = 5.0;
  repair->add_option("--markers-out", repaired, "Repaired marker file (relative to the manifest)")
      ->capture_default_str();
  repair->add_option("--log-dir", log_dir, "Directory for per-body repair logs")->capture_default_str();
  repair->add_option("--tolerance", tolerance, "Distance tolerance, mm")->capture_default_str();

  // track
  auto* track = app.add_subcommand("track", "Identify bodies and fit their poses in every mo-cap frame");
  add_manifest(track);
  add_output(track, output);
  TrackingOptions tracking;
  track->add_option("--residual", tracking.residual_threshold_mm, "Fit residual gate, mm")->capture_default_str();

  // template
  auto* templ = app.add_subcommand("template", "Estimate keypoint templates from the manual clicks");
  add_manifest(templ);
  add_output(templ, output);
  std::vector<std::string> individuals;
  templ->add_option("--individual", individuals, "Individual to build (repeatable; default all clicked)");

  // propagate
  auto* propagate = app.add_subcommand("propagate", "Write 2D/3D keypoints and boxes for every video frame");
  add_manifest(propagate);
  add_output(propagate, output);
  std::string annotations_dir;
  std::int64_t first = 0;
  std::int64_t count = -1;
  PropagationOptions prop;
  propagate->add_option("--dir", annotations_dir, "Output directory")->required();
  propagate->add_option("--first", first, "First video frame")->capture_default_str();
  propagate->add_option("--count", count, "Number of frames (default: to the end)");
  propagate->add_option("--threads", prop.threads, "Worker threads (0 = hardware)")->capture_default_str();
  propagate->add_option("--margin", prop.bbox_margin_px, "Bounding box margin, px")->capture_default_str();

  // qa-filter
  auto* qa = app.add_subcommand("qa-filter", "Flag inconsistent annotations against detector output (GESD)");
  add_output(qa, output);
  std::string predictions;
  GesdOptions gesd;
  int min_flagged = 2;
  qa->add_option("--predictions", predictions, "Prediction CSV")->required()->check(CLI::ExistingFile);
  qa->add_option("--annotations", annotations_dir, "Annotation directory")->required()->check(CLI::ExistingDirectory);
  qa->add_option("--alpha", gesd.alpha, "Significance level")->capture_default_str();
  qa->add_option("--max-outliers", gesd.max_outlier_fraction, "Upper bound on the outlier share")
      ->capture_default_str();
  qa->add_option("--min-flagged", min_flagged, "Outlier keypoints needed to drop an instance")->capture_default_str();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "RMSE and PCK of annotations or predictions against a reference");
  add_output(metrics, output);
  pipeline::MetricsInputs mi;
  std::string reference;
  std::string predicted;
  metrics->add_option("--reference", reference, "Reference annotation directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  auto* pred_dir = metrics->add_option("--predicted", predicted, "Annotation directory to score")
                       ->check(CLI::ExistingDirectory);
  metrics->add_option("--predictions", predictions, "Prediction CSV to score")
      ->check(CLI::ExistingFile)
      ->excludes(pred_dir);
  metrics->add_option("--pck", mi.pck_thresholds, "PCK thresholds as fractions of box width")
      ->delimiter(',')
      ->capture_default_str();

  // pose-variation
  auto* pose = app.add_subcommand("pose-variation", "Count unique head/body orientations");
  add_output(pose, output);
  double bin = 1.0;
  pose->add_option("--annotations", annotations_dir, "Annotation directory holding kp3d.csv")
      ->required()
      ->check(CLI::ExistingDirectory);
  pose->add_option("--bin", bin, "Angle bin, degrees")->capture_default_str();

  // hybrid-exp
  auto* hybrid = app.add_subcommand("hybrid-exp", "Compare triangulated and interpolated gap filling");
  add_output(hybrid, output);
  std::string config;
  std::optional<std::uint64_t> seed;
  hybrid->add_option("--config", config, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);
  hybrid->add_option("--seed", seed, "Overrides the config seed");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve frames, crops and annotation documents over HTTP");
  std::vector<std::string> manifests;
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("-m,--manifest", manifests, "Sequence manifest (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic capture with ground truth");
  std::string synth_dir;
  std::string synth_config;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::int64_t> frames;
  std::optional<int> birds;
  std::optional<double> offset, drift, deletion, click_noise, pred_noise, corruption, occlusion;
  std::optional<int> swaps;
  bool no_images = false;
  synth_cmd->add_option("--dir", synth_dir, "Output directory")->required();
  synth_cmd->add_option("--config", synth_config, "Scene config (TOML)")->check(CLI::ExistingFile);
  synth_cmd->add_option("--seed", synth_seed, "Random seed");
  synth_cmd->add_option("--frames", frames, "Video frames");
  synth_cmd->add_option("--individuals", birds, "Individuals (1-4)");
  synth_cmd->add_option("--clock-offset", offset, "Mo-cap frame at video frame 0");
  synth_cmd->add_option("--drift", drift, "Relative clock rate error");
  synth_cmd->add_option("--flash-deletion", deletion, "Share of flashes removed per stream");
  synth_cmd->add_option("--click-noise", click_noise, "Manual click noise, px");
  synth_cmd->add_option("--prediction-noise", pred_noise, "Detector noise, px");
  synth_cmd->add_option("--corruption", corruption, "Share of detector instances with displaced head keypoints");
  synth_cmd->add_option("--occlusion", occlusion, "Chance a manual click is marked occluded");
  synth_cmd->add_option("--label-swaps", swaps, "Mo-cap frames with swapped marker labels");
  synth_cmd->add_flag("--no-images", no_images, "Skip writing frame images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_exit("cli.Usage", e.what(), 64);
  }

  try {
    if (sync->parsed()) {
      auto m = load_manifest(manifest_path);
      output.emit(pipeline::synchronize(m, flash, clock));
    } else if (calibrate->parsed()) {
      output.emit(pipeline::calibrate(load_manifest(manifest_path), camera_ids, calib));
    } else if (repair->parsed()) {
      auto m = load_manifest(manifest_path);
      const auto base = m.source.parent_path();
      const auto out_path = fs::path(repaired).is_absolute() ? fs::path(repaired) : base / repaired;
      const auto logs = fs::path(log_dir).is_absolute() ? fs::path(log_dir) : base / log_dir;
      output.emit(pipeline::repair(m, out_path, logs, tolerance));
    } else if (track->parsed()) {
      output.emit(pipeline::track(load_manifest(manifest_path), tracking));
    } else if (templ->parsed()) {
      output.emit(pipeline::build_templates(load_manifest(manifest_path), individuals).report);
    } else if (propagate->parsed()) {
      output.emit(pipeline::propagate(load_manifest(manifest_path), annotations_dir, first, count, prop));
    } else if (qa->parsed()) {
      output.emit(pipeline::qa_filter(predictions, annotations_dir, gesd, min_flagged));
    } else if (metrics->parsed()) {
      mi.reference_dir = reference;
      if (!predicted.empty()) mi.predicted_dir = fs::path(predicted);
      if (!predictions.empty()) mi.predictions = fs::path(predictions);
      output.emit(pipeline::metrics(mi));
    } else if (pose->parsed()) {
      output.emit(pipeline::pose_variation(fs::path(annotations_dir) / "kp3d.csv", bin));
    } else if (hybrid->parsed()) {
      output.emit(pipeline::hybrid_experiment(config, seed));
    } else if (serve->parsed()) {
      std::vector<fs::path> paths(manifests.begin(), manifests.end());
      Service service(paths);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << fmt::format("serving {} sequence(s) on http://{}:{}\n", paths.size(), host, port);
      if (!service.listen(host, port)) error_exit("service.BindFailed", fmt::format("cannot bind {}:{}", host, port), 3);
      g_service = nullptr;
    } else if (synth_cmd->parsed()) {
      auto o = scene_options(synth_config);
      if (synth_seed) o.seed = *synth_seed;
      if (frames) o.video_frames = *frames;
      if (birds) o.individuals = *birds;
      if (offset) o.clock_offset = *offset;
      if (drift) o.drift = *drift;
      if (deletion) o.flash_deletion = *deletion;
      if (click_noise) o.click_noise_px = *click_noise;
      if (pred_noise) o.prediction_noise_px = *pred_noise;
      if (corruption) o.corruption = *corruption;
      if (occlusion) o.occlusion = *occlusion;
      if (swaps) o.label_swaps = *swaps;
      if (no_images) o.images = false;
      const auto scene = synth::generate(o);
      synth::write_scene(scene, synth_dir);
      std::cout << fmt::format("wrote {} ({} video frames, {} individuals, {} cameras)\n",
                               (fs::path(synth_dir) / "manifest.toml").string(), o.video_frames, o.individuals,
                               scene.cameras.size());
    }
  } catch (const Error& e) {
    error_exit(code_name(e.code()), e.what(), 2);
  } catch (const std::exception& e) {
    error_exit("cli.Internal", e.what(), 1);
  }
  return 0;
}
