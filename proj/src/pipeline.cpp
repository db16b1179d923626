#include "keyprop/pipeline.hpp"

#include "keyprop/error.hpp"
#include "keyprop/hybrid.hpp"
#include "keyprop/io.hpp"
#include "keyprop/toml_lite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <set>

namespace keyprop::pipeline {

namespace {

nlohmann::json parse_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<RigidBodyDef> load_bodies(const SequenceManifest& manifest) {
  auto defs = io::bodies_from_json(parse_json_file(manifest.bodies));
  for (const auto& d : defs) validate_body(d);
  return defs;
}

const BodyTrack& find_track(std::span<const BodyTrack> tracks, const std::string& individual, BodyPart part) {
  for (const auto& t : tracks) {
    if (t.individual_id == individual && t.part == part) return t;
  }
  throw Error(ErrorCode::InvalidManifest, fmt::format("no {} body for individual '{}'", part_name(part), individual));
}

nlohmann::json metric_json(const MetricReport& report) {
  nlohmann::json out = nlohmann::json::object();
  for (const Keypoint kp : kAllKeypoints) {
    const auto& m = report[index(kp)];
    if (m) out[std::string(keypoint_name(kp))] = {{"n", m->count}, {"value", m->value}};
  }
  return out;
}

// Keypoints as rows, one column per report.
std::string metric_table(const std::vector<std::string>& columns, const std::vector<const MetricReport*>& reports,
                         const std::string& format = "{:>12.3f}") {
  std::string out = fmt::format("{:<16}", "keypoint");
  for (const auto& c : columns) out += fmt::format("{:>14}", c);
  out += "\n";
  for (const Keypoint kp : kAllKeypoints) {
    out += fmt::format("{:<16}", keypoint_name(kp));
    for (const auto* r : reports) {
      const auto& m = (*r)[index(kp)];
      out += m ? "  " + fmt::format(fmt::runtime(format), m->value) : fmt::format("{:>14}", "-");
    }
    out += "\n";
  }
  return out;
}

// kp2d_<camera>.csv files in a directory, camera-sorted.
std::vector<std::pair<std::string, fs::path>> keypoint_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, fmt::format("not a directory: {}", dir.string()));
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("kp2d_") && name.ends_with(".csv") && name.size() > 9) {
      out.emplace_back(name.substr(5, name.size() - 9), entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::MissingFile, fmt::format("no kp2d_<camera>.csv files in {}", dir.string()));
  return out;
}

std::vector<KeyedPixel> read_all_2d(const fs::path& dir) {
  std::vector<KeyedPixel> out;
  for (const auto& [camera, path] : keypoint_files(dir)) {
    auto part = io::read_keypoints_2d(path, camera);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

nlohmann::json key_json(const FrameKey& k) {
  return {{"frame", k.frame}, {"individual", k.individual}, {"camera", k.camera}};
}

nlohmann::json histogram_json(const GapHistogram& h) {
  return {{"1", h.single}, {"2-30", h.short_runs}, {">30", h.long_runs}, {"total", h.total()},
          {"fraction_at_most_30", h.fraction_at_most_30()}};
}

}  // namespace

// ---------------------------------------------------------------------------

Report synchronize(SequenceManifest& manifest, const FlashOptions& flash, const ClockOptions& clock) {
  if (manifest.sync_counts.empty()) throw Error(ErrorCode::InvalidManifest, "manifest names no sync_counts trace");
  const auto counts = io::read_marker_counts(manifest.sync_counts);
  const auto mocap = fill_missing_flashes(detect_flashes_mocap(counts, manifest.mocap_rate, flash), flash);
  Report report{{{"cameras", nlohmann::json::array()}}, {}};
  report.table = fmt::format("{:<10}{:>14}{:>14}{:>12}{:>9}\n", "camera", "offset", "rate", "residual", "pairs");
  for (auto& cam : manifest.cameras) {
    if (cam.intensity.empty()) {
      throw Error(ErrorCode::InvalidManifest, fmt::format("camera '{}' has no intensity trace", cam.id));
    }
    const auto video =
        fill_missing_flashes(detect_flashes_video(io::read_intensity(cam.intensity, manifest.video_rate), flash), flash);
    const auto map = build_clock_map(video, mocap, clock);
    cam.clock = map;
    auto inferred = [](const FlashTimeline& t) {
      return std::count_if(t.flashes.begin(), t.flashes.end(), [](const Flash& f) { return f.inferred; });
    };
    report.json["cameras"].push_back({{"camera", cam.id},
                                      {"offset", map.offset},
                                      {"rate", map.rate_ratio},
                                      {"residual_rms", map.residual_rms},
                                      {"matched", map.matched},
                                      {"video_flashes", video.flashes.size()},
                                      {"video_inferred", inferred(video)},
                                      {"mocap_flashes", mocap.flashes.size()},
                                      {"mocap_inferred", inferred(mocap)}});
    report.table += fmt::format("{:<10}{:>14.4f}{:>14.8f}{:>12.4f}{:>9}\n", cam.id, map.offset, map.rate_ratio,
                                map.residual_rms, map.matched);
  }
  save_manifest(manifest);
  return report;
}

Report calibrate(const SequenceManifest& manifest, const std::vector<std::string>& camera_ids,
                 const CalibrationOptions& options) {
  if (manifest.calibration_clicks.empty()) {
    throw Error(ErrorCode::InvalidManifest, "manifest names no calibration_clicks file");
  }
  const auto raw = io::calibration_clicks_from_json(parse_json_file(manifest.calibration_clicks));
  const auto frames = io::read_markers(manifest.markers);
  std::map<std::int64_t, const MarkerFrame*> by_frame;
  for (const auto& f : frames) by_frame[f.frame_index] = &f;

  Report report{{{"cameras", nlohmann::json::array()}}, {}};
  report.table = fmt::format("{:<10}{:>10}{:>10}{:>30}\n", "camera", "points", "rms_px", "extents_mm");
  for (const auto& entry : manifest.cameras) {
    if (!camera_ids.empty() && std::find(camera_ids.begin(), camera_ids.end(), entry.id) == camera_ids.end()) continue;
    const auto& clock = manifest.clock(entry.id);
    std::vector<ExtrinsicObservation> observations;
    std::size_t unmatched = 0;
    for (const auto& o : raw) {
      if (o.camera_id != entry.id) continue;
      ExtrinsicObservation obs{o.camera_id, o.video_frame, {}};
      const auto it = by_frame.find(clock.map_frame(o.video_frame));
      for (const auto& c : o.clicks) {
        const MarkerObservation* m = it == by_frame.end() ? nullptr : it->second->find(c.marker_id);
        if (!m || !m->position) {
          ++unmatched;
          continue;
        }
        obs.clicks.push_back({c.marker_id, c.pixel, *m->position});
      }
      if (!obs.clicks.empty()) observations.push_back(std::move(obs));
    }
    const auto camera = io::read_camera(entry.calibration);
    const auto result = calibrate_extrinsics(observations, camera.model.intrinsics(), options);
    io::write_camera(entry.calibration, Camera{entry.id, result.camera});
    const auto& r = result.report;
    const Point3 centre = result.camera.center();
    report.json["cameras"].push_back({{"camera", entry.id},
                                      {"correspondences", r.correspondences},
                                      {"unmatched_clicks", unmatched},
                                      {"rms_px", r.rms_px},
                                      {"per_observation_rms_px", r.per_observation_rms_px},
                                      {"principal_extents_mm", r.principal_extents_mm},
                                      {"centre_mm", {centre.x(), centre.y(), centre.z()}}});
    report.table += fmt::format("{:<10}{:>10}{:>10.3f}{:>30}\n", entry.id, r.correspondences, r.rms_px,
                                fmt::format("{:.0f} / {:.0f} / {:.0f}", r.principal_extents_mm[0],
                                            r.principal_extents_mm[1], r.principal_extents_mm[2]));
  }
  return report;
}

Report repair(SequenceManifest& manifest, const fs::path& markers_out, const fs::path& log_dir, double tolerance_mm) {
  auto frames = io::read_markers(manifest.markers);
  const auto defs = load_bodies(manifest);
  Report report{{{"bodies", nlohmann::json::array()}}, {}};
  report.table = fmt::format("{:<24}{:>10}{:>14}\n", "body", "repaired", "unrepairable");
  for (const auto& def : defs) {
    auto result = repair_labels(frames, def, tolerance_mm);
    frames = std::move(result.frames);
    io::write_text_atomic(log_dir / (def.body_id + ".csv"), io::format_repair_log(result.log));
    report.json["bodies"].push_back(
        {{"body", def.body_id}, {"repaired", result.log.size()}, {"unrepairable", result.unrepairable}});
    report.table += fmt::format("{:<24}{:>10}{:>14}\n", def.body_id, result.log.size(), result.unrepairable.size());
  }
  io::write_text_atomic(markers_out, io::format_markers(frames));
  manifest.markers = fs::absolute(markers_out);
  save_manifest(manifest);
  return report;
}

Report track(const SequenceManifest& manifest, const TrackingOptions& options) {
  const auto frames = io::read_markers(manifest.markers);
  const auto defs = load_bodies(manifest);
  const auto result = track_sequence(frames, defs, options);
  io::write_text_atomic(manifest.tracks, io::format_tracks(result.tracks));
  Report report{{{"bodies", nlohmann::json::array()}, {"warnings", result.warnings}}, {}};
  report.table = fmt::format("{:<24}{:>10}{:>10}\n", "body", "valid", "frames");
  for (const auto& t : result.tracks) {
    const auto valid = std::count_if(t.poses.begin(), t.poses.end(), [](const TrackedPose& p) { return p.valid; });
    report.json["bodies"].push_back({{"body", t.body_id}, {"valid", valid}, {"frames", t.poses.size()}});
    report.table += fmt::format("{:<24}{:>10}{:>10}\n", t.body_id, valid, t.poses.size());
  }
  return report;
}

std::vector<BodyTrack> load_tracks(const SequenceManifest& manifest) {
  const auto defs = load_bodies(manifest);
  if (fs::exists(manifest.tracks)) return io::read_tracks(manifest.tracks, defs);
  return track_sequence(io::read_markers(manifest.markers), defs).tracks;
}

// ---------------------------------------------------------------------------

std::string template_text(const KeypointTemplate& keypoint_template) {
  return io::template_to_json(keypoint_template).dump(2) + "\n";
}

TemplateBuild build_templates(const SequenceManifest& manifest, const std::vector<std::string>& individuals,
                              const TemplateOptions& options) {
  if (manifest.annotations.empty() || !fs::exists(manifest.annotations)) {
    throw Error(ErrorCode::MissingFile, "no manual annotation file for this sequence");
  }
  const auto clicks = io::annotations_from_json(parse_json_file(manifest.annotations));
  const auto cameras = load_cameras(manifest);
  const auto tracks = load_tracks(manifest);
  const auto& clock = manifest.clock();

  std::vector<std::string> who = individuals;
  if (who.empty()) {
    std::set<std::string> seen;
    for (const auto& c : clicks) seen.insert(c.individual_id);
    who.assign(seen.begin(), seen.end());
  }
  TemplateBuild build;
  build.report.json = {{"templates", nlohmann::json::array()}, {"report", nlohmann::json::array()}};
  build.report.table = fmt::format("{:<16}{:<16}{:>6}{:>12}\n", "individual", "keypoint", "n", "spread_mm");
  for (const auto& ind : who) {
    auto est = estimate_template(clicks, cameras, find_track(tracks, ind, BodyPart::Head),
                                 find_track(tracks, ind, BodyPart::Backpack), clock, options);
    io::write_text_atomic(manifest.template_path(ind), template_text(est.keypoint_template));
    build.report.json["templates"].push_back(io::template_to_json(est.keypoint_template));
    nlohmann::json spread = nlohmann::json::object();
    for (const Keypoint kp : kAllKeypoints) {
      const auto& k = est.keypoint_template.keypoints[index(kp)];
      if (!k) continue;
      const auto s = k->spread ? fmt::format("{:.3f}", k->spread->norm()) : std::string("-");
      if (k->spread) spread[std::string(keypoint_name(kp))] = k->spread->norm();
      build.report.table += fmt::format("{:<16}{:<16}{:>6}{:>12}\n", ind, keypoint_name(kp), k->samples, s);
    }
    build.report.json["report"].push_back(
        {{"individual_id", ind}, {"spread_norm_mm", spread}, {"warnings", est.warnings}});
    for (const auto& w : est.warnings) build.report.table += fmt::format("warning: {}\n", w);
    build.estimates.push_back(std::move(est));
  }
  return build;
}

std::vector<KeypointTemplate> load_templates(const SequenceManifest& manifest) {
  std::vector<std::string> who = manifest.individuals;
  if (who.empty() && fs::is_directory(manifest.templates)) {
    for (const auto& e : fs::directory_iterator(manifest.templates)) {
      if (e.path().extension() == ".json") who.push_back(e.path().stem().string());
    }
    std::sort(who.begin(), who.end());
  }
  std::vector<KeypointTemplate> out;
  for (const auto& ind : who) {
    auto t = io::template_from_json(parse_json_file(manifest.template_path(ind)));
    if (t.individual_id != ind) {
      throw Error(ErrorCode::ParseError, fmt::format("template file for '{}' names '{}'", ind, t.individual_id));
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw Error(ErrorCode::MissingFile, "no templates found; run template first");
  return out;
}

Report propagate(const SequenceManifest& manifest, const fs::path& out_dir, std::int64_t first, std::int64_t count,
                 const PropagationOptions& options) {
  if (count < 0) count = manifest.video_frames - first;
  const auto templates = load_templates(manifest);
  const auto cameras = load_cameras(manifest);
  const auto tracks = load_tracks(manifest);
  const auto frames = propagate_sequence(templates, tracks, cameras, manifest.clock(), first, count, options);
  const auto files = io::format_annotations(frames);
  fs::create_directories(out_dir);
  for (const auto& [cam, text] : files.per_camera_2d) io::write_text_atomic(out_dir / fmt::format("kp2d_{}.csv", cam), text);
  io::write_text_atomic(out_dir / "kp3d.csv", files.keypoints_3d);
  io::write_text_atomic(out_dir / "boxes.csv", files.boxes);

  std::size_t valid = 0;
  std::size_t instances = 0;
  std::size_t excluded = 0;
  for (const auto& f : frames) {
    for (const auto& ind : f.individuals) valid += ind.valid ? 1 : 0;
    for (const auto& row : filter_training_crops(f)) {
      for (const bool keep : row) {
        ++instances;
        excluded += keep ? 0 : 1;
      }
    }
  }
  Report report;
  report.json = {{"frames", frames.size()},
                 {"valid_individual_frames", valid},
                 {"views", instances},
                 {"views_excluded_from_training", excluded}};
  report.table = fmt::format("frames {}  valid individual-frames {}  views excluded for overlap {}/{}\n",
                             frames.size(), valid, excluded, instances);
  return report;
}

// ---------------------------------------------------------------------------

Report qa_filter(const fs::path& predictions_path, const fs::path& annotation_dir, const GesdOptions& options,
                 int min_flagged) {
  std::map<std::pair<FrameKey, Keypoint>, Pixel> annotated;
  for (auto& a : read_all_2d(annotation_dir)) annotated.emplace(std::pair{std::move(a.key), a.keypoint}, a.position);
  std::vector<KeypointError> errors;
  for (const auto& p : io::read_predictions(predictions_path)) {
    const auto it = annotated.find({FrameKey{p.video_frame, p.individual, p.camera}, p.keypoint});
    if (it == annotated.end()) continue;
    errors.push_back({it->first.first, p.keypoint, (p.pixel - it->second).norm()});
  }
  if (errors.empty()) throw Error(ErrorCode::NoMatchedPairs, "no prediction matches an annotation");
  const auto result = filter_frames(errors, options, min_flagged);

  std::map<std::pair<std::string, std::string>, std::vector<std::int64_t>> runs;
  for (const auto& k : result.dropped) runs[{k.individual, k.camera}].push_back(k.frame);
  GapHistogram gaps;
  for (auto& [_, frames] : runs) {
    std::sort(frames.begin(), frames.end());
    gaps += gap_statistics(frames);
  }

  Report report;
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& k : result.dropped) dropped.push_back(key_json(k));
  nlohmann::json flagged = nlohmann::json::object();
  for (const Keypoint kp : kAllKeypoints) flagged[std::string(keypoint_name(kp))] = result.flagged[index(kp)];
  report.json = {{"instances", result.kept.size() + result.dropped.size()},
                 {"dropped_count", result.dropped.size()},
                 {"drop_fraction", result.drop_fraction()},
                 {"flagged", flagged},
                 {"gaps", histogram_json(gaps)},
                 {"dropped", dropped}};
  report.table = fmt::format("instances {}  dropped {} ({:.2f}%)\n\n", result.kept.size() + result.dropped.size(),
                             result.dropped.size(), 100.0 * result.drop_fraction());
  report.table += fmt::format("{:<14}{:>8}\n", "gap length", "count");
  report.table += fmt::format("{:<14}{:>8}\n{:<14}{:>8}\n{:<14}{:>8}\n", "1", gaps.single, "2-30", gaps.short_runs,
                              ">30", gaps.long_runs);
  return report;
}

Report metrics(const MetricsInputs& inputs) {
  const auto reference = read_all_2d(inputs.reference_dir);
  std::vector<KeyedPixel> predicted;
  if (inputs.predicted_dir) {
    predicted = read_all_2d(*inputs.predicted_dir);
  } else if (inputs.predictions) {
    for (const auto& p : io::read_predictions(*inputs.predictions)) {
      predicted.push_back({{p.video_frame, p.individual, p.camera}, p.keypoint, p.pixel});
    }
  } else {
    throw Error(ErrorCode::InvalidArgument, "metrics needs predicted annotations or a prediction file");
  }

  std::map<FrameKey, double> widths;
  const fs::path boxes = inputs.reference_dir / "boxes.csv";
  if (fs::exists(boxes)) {
    for (const auto& [key, box] : io::read_boxes(boxes)) widths[key] = box.width();
  }

  Report report;
  const auto rmse2 = rmse_report<2>(predicted, reference);
  report.json["rmse_2d_px"] = metric_json(rmse2);
  std::vector<std::string> columns{"rmse_px"};
  std::vector<const MetricReport*> reports{&rmse2};

  std::vector<MetricReport> pck;
  if (!widths.empty() && !inputs.pck_thresholds.empty()) {
    pck = pck_report(predicted, reference, widths, inputs.pck_thresholds);
    report.json["pck"] = nlohmann::json::object();
    for (std::size_t t = 0; t < pck.size(); ++t) {
      const auto label = fmt::format("PCK{:02.0f}", 100.0 * inputs.pck_thresholds[t]);
      report.json["pck"][label] = metric_json(pck[t]);
      columns.push_back(label);
    }
    for (const auto& p : pck) reports.push_back(&p);
  }

  MetricReport rmse3;
  if (inputs.predicted_dir && fs::exists(*inputs.predicted_dir / "kp3d.csv") &&
      fs::exists(inputs.reference_dir / "kp3d.csv")) {
    const auto a = io::read_keypoints_3d(*inputs.predicted_dir / "kp3d.csv");
    const auto b = io::read_keypoints_3d(inputs.reference_dir / "kp3d.csv");
    rmse3 = rmse_report<3>(a, b);
    report.json["rmse_3d_mm"] = metric_json(rmse3);
    columns.push_back("rmse_mm");
    reports.push_back(&rmse3);
  }
  report.table = metric_table(columns, reports, "{:>12.4f}");
  return report;
}

Report pose_variation(const fs::path& keypoints_3d, double bin_deg) {
  std::map<std::pair<std::int64_t, std::string>, PerKeypoint<std::optional<Point3>>> instances;
  for (const auto& p : io::read_keypoints_3d(keypoints_3d)) {
    instances[{p.key.frame, p.key.individual}][index(p.keypoint)] = p.position;
  }
  std::vector<PoseSample> samples;
  std::size_t degenerate = 0;
  for (const auto& [_, kps] : instances) {
    PoseSample s;
    for (const BodyPart part : {BodyPart::Head, BodyPart::Backpack}) {
      try {
        (part == BodyPart::Head ? s.head : s.body) = pose_orientation(kps, part);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::DegeneratePlane) ++degenerate;
      }
    }
    samples.push_back(std::move(s));
  }
  const auto counts = count_unique_poses(samples, bin_deg);
  Report report;
  report.json = {{"instances", samples.size()},
                 {"bin_deg", bin_deg},
                 {"degenerate_planes", degenerate},
                 {"unique_head", counts.head},
                 {"unique_body", counts.body},
                 {"unique_combined", counts.combined}};
  report.table = fmt::format("{:<12}{:>10}\n{:<12}{:>10}\n{:<12}{:>10}\n{:<12}{:>10}\n", "instances", samples.size(),
                             "head", counts.head, "body", counts.body, "head+body", counts.combined);
  return report;
}

// ---------------------------------------------------------------------------

Report hybrid_experiment(const fs::path& config_path, std::optional<std::uint64_t> seed_override) {
  const auto config = toml_lite::parse(io::read_text(config_path));
  const fs::path base = fs::absolute(config_path).parent_path();
  auto path = [&](const char* key) {
    if (!config.contains(key) || !config.at(key).is_string()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("experiment config needs string '{}'", key));
    }
    const fs::path p(config.at(key).get<std::string>());
    return p.is_absolute() ? p : base / p;
  };
  GapSpec spec;
  try {
    spec.fraction = config.value("fraction", spec.fraction);
    spec.min_length = config.value("min_length", spec.min_length);
    spec.max_length = config.value("max_length", spec.max_length);
    spec.seed = config.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("experiment config: {}", e.what()));
  }
  if (seed_override) spec.seed = *seed_override;

  const auto manifest = load_manifest(path("manifest"));
  const auto cameras = load_cameras(manifest);
  const auto predictions = io::read_predictions(path("predictions"));

  std::map<std::string, std::map<std::int64_t, KeypointFrame>> truth;
  for (const auto& p : io::read_keypoints_3d(path("truth"))) {
    auto& frame = truth[p.key.individual][p.key.frame];
    frame.frame = p.key.frame;
    frame.points[index(p.keypoint)] = p.position;
  }
  std::vector<std::string> who;
  if (config.contains("individuals")) {
    who = config.at("individuals").get<std::vector<std::string>>();
  } else {
    for (const auto& [ind, _] : truth) who.push_back(ind);
  }

  Report report;
  report.json = {{"seed", spec.seed},
                 {"fraction", spec.fraction},
                 {"min_length", spec.min_length},
                 {"max_length", spec.max_length},
                 {"individuals", nlohmann::json::array()}};
  std::string csv = "individual,keypoint,method,n,rmse_mm\n";
  for (std::size_t i = 0; i < who.size(); ++i) {
    const auto it = truth.find(who[i]);
    if (it == truth.end()) throw Error(ErrorCode::InvalidArgument, fmt::format("no truth for '{}'", who[i]));
    KeypointTrack track;
    for (const auto& [_, f] : it->second) track.push_back(f);
    GapSpec own = spec;
    own.seed = spec.seed + i;
    const auto gapped = introduce_gaps(track, own);
    const auto hybrid = fill_triangulation(gapped, predictions, cameras, who[i]);
    const std::vector<std::pair<std::string, KeypointTrack>> fills{{"triangulation", hybrid.track},
                                                                   {"linear", fill_linear(gapped)}};
    const auto cmp = compare_fills(track, fills, gapped.gaps);

    std::size_t removed = 0;
    nlohmann::json gaps = nlohmann::json::array();
    for (const auto& g : gapped.gaps) {
      removed += g.length();
      gaps.push_back({track[g.begin].frame, g.length()});
    }
    nlohmann::json methods = nlohmann::json::object();
    std::vector<const MetricReport*> reports;
    for (std::size_t m = 0; m < cmp.methods.size(); ++m) {
      methods[cmp.methods[m]] = metric_json(cmp.rmse_mm[m]);
      reports.push_back(&cmp.rmse_mm[m]);
      for (const Keypoint kp : kAllKeypoints) {
        if (const auto& r = cmp.rmse_mm[m][index(kp)]) {
          csv += fmt::format("{},{},{},{},{}\n", who[i], keypoint_name(kp), cmp.methods[m], r->count, r->value);
        }
      }
    }
    report.json["individuals"].push_back({{"individual", who[i]},
                                          {"frames", track.size()},
                                          {"removed_frames", removed},
                                          {"gaps", gaps},
                                          {"unfilled", hybrid.unfilled.size()},
                                          {"rmse_mm", methods}});
    report.table += fmt::format("{}: {} of {} frames removed in {} gaps\n", who[i], removed, track.size(),
                                gapped.gaps.size());
    report.table += metric_table(cmp.methods, reports) + "\n";
  }
  if (config.contains("output")) {
    const auto out = path("output");
    io::write_text_atomic(out, report.json.dump(2) + "\n");
    io::write_text_atomic(fs::path(out).replace_extension(".csv"), csv);
  }
  return report;
}

}  // namespace keyprop::pipeline
