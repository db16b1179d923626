#include "keyprop/synth.hpp"

#include "keyprop/error.hpp"
#include "keyprop/manifest.hpp"

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace keyprop::synth {

namespace {

constexpr int kMaxIndividuals = 4;

// Marker layouts chosen so that every intra-body distance differs from the
// others by >= 2.5 mm and any two bodies' sorted distance patterns differ by
// >= 12 mm (L2).
constexpr double kBackpackMarkers[kMaxIndividuals][4][3] = {
    {{-30, 1, 45}, {-13, 25, 31}, {23, -39, 36}, {36, 14, 26}},
    {{-36, 24, 32}, {31, 0, 25}, {-23, -17, 25}, {-39, -22, 54}},
    {{2, -6, 52}, {-36, 6, 31}, {20, 4, 29}, {33, -29, 40}},
    {{-26, -31, 46}, {34, -32, 32}, {12, 19, 25}, {-8, -12, 27}},
};
constexpr double kHeadMarkers[kMaxIndividuals][4][3] = {
    {{10, 1, 26}, {12, -21, 34}, {24, -10, 33}, {-21, -9, 30}},
    {{-4, 19, 52}, {9, 9, 55}, {-18, 17, 30}, {6, -22, 28}},
    {{-16, -10, 40}, {19, -13, 41}, {9, 25, 28}, {-18, 17, 44}},
    {{-20, 10, 33}, {24, 1, 31}, {23, 14, 53}, {12, 13, 26}},
};

// Keypoints in the part frames (x forward, z up), before per-bird scaling.
constexpr double kKeypointOffsets[kKeypointCount][3] = {
    {55, 0, -5},     // beak (head)
    {38, 0, 8},      // nose
    {25, 14, 6},     // left eye
    {25, -14, 6},    // right eye
    {45, 38, -25},   // left shoulder (backpack)
    {45, -38, -25},  // right shoulder
    {70, 0, -45},    // top keel
    {30, 0, -85},    // bottom keel
    {-120, 0, -20},  // tail
};

const Point3 kArenaCentre(1800.0, 2100.0, 0.0);

// Independent stream per component so that one knob does not reshuffle the others.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return std::mt19937_64(seq);
}

Eigen::Matrix3d rot(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

RigidTransform body_pose(int bird, int birds, double s) {
  const double phase = 2.0 * std::numbers::pi * bird / birds;
  const double theta = phase + 0.35 * s;
  const double radius = 800.0 + 150.0 * std::sin(0.23 * s + bird);
  const double height = 150.0 + 130.0 * std::sin(0.9 * s + 1.3 * bird);
  const Point3 position = kArenaCentre + Point3(radius * std::cos(theta), radius * std::sin(theta), height);
  const double yaw = theta + std::numbers::pi / 2.0 + 0.3 * std::sin(0.7 * s);
  const Eigen::Matrix3d r = rot(Eigen::Vector3d::UnitZ(), yaw) * rot(Eigen::Vector3d::UnitY(), 0.15 * std::sin(1.1 * s + bird)) *
                            rot(Eigen::Vector3d::UnitX(), 0.1 * std::sin(1.7 * s));
  return {r, position};
}

// Head relative to the backpack: a bobbing neck with yaw/pitch scans.
RigidTransform neck(int bird, double s) {
  const Eigen::Vector3d t(170.0 + 10.0 * std::sin(2.3 * s), 5.0 * std::sin(1.9 * s), 120.0 + 8.0 * std::sin(3.1 * s));
  const Eigen::Matrix3d r = rot(Eigen::Vector3d::UnitZ(), 0.8 * std::sin(0.8 * s + bird)) *
                            rot(Eigen::Vector3d::UnitY(), 0.5 * std::sin(1.3 * s)) *
                            rot(Eigen::Vector3d::UnitX(), 0.2 * std::sin(2.1 * s));
  return {r, t};
}

Camera look_at(const std::string& id, const Point3& centre, const Point3& target, const Intrinsics& k) {
  const Eigen::Vector3d z = (target - centre).normalized();
  const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return {id, CameraModel(k, RigidTransform(r, -r * centre))};
}

// Intensity and marker-count traces for a flash train.
void make_flashes(Scene& scene, std::int64_t mocap_frames) {
  const auto& opts = scene.options;
  constexpr std::int64_t first_flash = 30;
  constexpr std::int64_t period = 180;  // 6 s at 30 Hz
  for (std::int64_t v = first_flash; v < opts.video_frames; v += period) {
    const auto m = scene.clock.map_frame(v);
    if (m + 101 >= mocap_frames) break;
    scene.video_flashes.push_back(v);
    scene.mocap_flashes.push_back(m);
  }

  auto deleted = [&](std::uint64_t component) {
    std::vector<bool> gone(scene.video_flashes.size(), false);
    if (gone.size() < 3) return gone;
    std::vector<std::size_t> interior;
    for (std::size_t i = 1; i + 1 < gone.size(); ++i) interior.push_back(i);
    auto rng = stream(opts.seed, component);
    std::shuffle(interior.begin(), interior.end(), rng);
    const auto count = static_cast<std::size_t>(std::llround(opts.flash_deletion * static_cast<double>(gone.size())));
    for (std::size_t i = 0; i < std::min(count, interior.size()); ++i) gone[interior[i]] = true;
    return gone;
  };
  const auto video_gone = deleted(11);
  const auto mocap_gone = deleted(12);

  auto rng = stream(opts.seed, 13);
  std::uniform_real_distribution<double> jitter(-4.0, 4.0);
  scene.intensity.frame_rate = 30.0;
  scene.intensity.samples.assign(static_cast<std::size_t>(opts.video_frames), 0.0);
  for (auto& x : scene.intensity.samples) x = 40.0 + jitter(rng);
  scene.sync_counts.assign(static_cast<std::size_t>(mocap_frames), 4);
  for (std::size_t i = 0; i < scene.video_flashes.size(); ++i) {
    if (!video_gone[i]) {
      const auto v = scene.video_flashes[i];
      for (std::int64_t f = v; f < std::min(v + 30, opts.video_frames); ++f) {
        scene.intensity.samples[static_cast<std::size_t>(f)] = 210.0 + jitter(rng);
      }
    }
    if (!mocap_gone[i]) {
      const auto m = scene.mocap_flashes[i];
      // Transitional counts of 5 on either side must not move the onset.
      if (m > 0) scene.sync_counts[static_cast<std::size_t>(m - 1)] = 5;
      for (std::int64_t f = m; f < m + 100; ++f) scene.sync_counts[static_cast<std::size_t>(f)] = 6;
      scene.sync_counts[static_cast<std::size_t>(m + 100)] = 5;
    }
  }
}

std::vector<Pixel> visible_pixels(const PerKeypoint<Point3>& world, const CameraModel& camera) {
  std::vector<Pixel> out;
  for (const auto& p : world) {
    const auto proj = project(camera, p);
    if (proj.visible) out.push_back(proj.pixel);
  }
  return out;
}

}  // namespace

std::vector<Camera> rig_cameras() {
  Intrinsics k;
  k.fx = 2000.0;
  k.fy = 2004.0;
  k.cx = 1921.5;
  k.cy = 1078.0;
  k.width = 3840;
  k.height = 2160;
  k.distortion = {-0.08, 0.02, 4e-4, -3e-4, 0.0};
  const Point3 target = kArenaCentre + Point3(0.0, 0.0, 150.0);
  return {look_at("cam0", {-200.0, -200.0, 2000.0}, target, k),
          look_at("cam1", {3800.0, -200.0, 2100.0}, target, k),
          look_at("cam2", {3800.0, 4400.0, 1950.0}, target, k),
          look_at("cam3", {-200.0, 4400.0, 2050.0}, target, k)};
}

PerKeypoint<Point3> place_keypoints(const KeypointTemplate& keypoint_template, const RigidTransform& head,
                                    const RigidTransform& backpack) {
  PerKeypoint<Point3> out;
  for (const Keypoint kp : kAllKeypoints) {
    const auto& est = keypoint_template.keypoints[index(kp)];
    if (!est) throw Error(ErrorCode::InvalidArgument, "template lacks a keypoint");
    out[index(kp)] = (keypoint_part(kp) == BodyPart::Head ? head : backpack).apply(est->offset);
  }
  return out;
}

PerKeypoint<Point3> Scene::keypoints_at(std::size_t individual, std::int64_t video_frame) const {
  const auto m = clock.map_frame(video_frame);
  const auto* head = poses[2 * individual].at(m);
  const auto* backpack = poses[2 * individual + 1].at(m);
  if (!head || !backpack) throw Error(ErrorCode::InvalidArgument, fmt::format("video frame {} is outside the capture", video_frame));
  return place_keypoints(templates[individual], head->pose, backpack->pose);
}

Scene generate(const SceneOptions& options) {
  if (options.individuals < 1 || options.individuals > kMaxIndividuals) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("synthetic scenes hold 1 to {} individuals", kMaxIndividuals));
  }
  if (options.video_frames < 2) throw Error(ErrorCode::InvalidArgument, "need at least two video frames");
  Scene scene;
  scene.options = options;
  scene.cameras = rig_cameras();
  scene.clock.offset = options.clock_offset;
  scene.clock.rate_ratio = 100.0 / 30.0 * (1.0 + options.drift);

  const std::int64_t mocap_frames = scene.clock.map_frame(options.video_frames - 1) + 200;

  // Bodies, templates and true poses.
  for (int b = 0; b < options.individuals; ++b) {
    const std::string ind = fmt::format("bird{}", b + 1);
    scene.individuals.push_back(ind);
    for (const BodyPart part : {BodyPart::Head, BodyPart::Backpack}) {
      RigidBodyDef def;
      def.individual_id = ind;
      def.part = part;
      def.body_id = fmt::format("{}_{}", ind, part_name(part));
      const auto& layout = part == BodyPart::Head ? kHeadMarkers[b] : kBackpackMarkers[b];
      for (int k = 0; k < 4; ++k) {
        def.marker_template[k] = Point3(layout[k][0], layout[k][1], layout[k][2]);
        def.marker_ids[k] = fmt::format("{}_m{}", def.body_id, k);
      }
      scene.bodies.push_back(def);
    }
    KeypointTemplate t;
    t.individual_id = ind;
    const double scale = 1.0 + 0.05 * b;
    for (const Keypoint kp : kAllKeypoints) {
      const auto& o = kKeypointOffsets[index(kp)];
      t.keypoints[index(kp)] = KeypointEstimate{scale * Point3(o[0], o[1], o[2]), 1, std::nullopt};
    }
    scene.templates.push_back(t);
  }
  for (const auto& def : scene.bodies) scene.poses.push_back({def.body_id, def.individual_id, def.part, {}});
  for (std::int64_t f = 0; f < mocap_frames; ++f) {
    const double s = static_cast<double>(f) / 100.0;
    for (int b = 0; b < options.individuals; ++b) {
      const auto backpack = body_pose(b, options.individuals, s);
      const auto head = compose(backpack, neck(b, s));
      scene.poses[2 * b].poses.push_back({f, head, 0.0, true});
      scene.poses[2 * b + 1].poses.push_back({f, backpack, 0.0, true});
    }
  }

  make_flashes(scene, mocap_frames);

  // Frames used for calibration clicks keep their labels intact.
  std::vector<std::int64_t> calibration_frames;
  for (int k = 0; k < options.calibration_frames; ++k) {
    calibration_frames.push_back(
        static_cast<std::int64_t>((k + 0.5) * static_cast<double>(options.video_frames) / options.calibration_frames));
  }
  std::vector<std::int64_t> protected_mocap;
  for (const auto v : calibration_frames) protected_mocap.push_back(scene.clock.map_frame(v));

  // Marker frames.
  scene.markers.reserve(static_cast<std::size_t>(mocap_frames));
  for (std::int64_t f = 0; f < mocap_frames; ++f) {
    MarkerFrame frame;
    frame.frame_index = f;
    for (std::size_t d = 0; d < scene.bodies.size(); ++d) {
      const auto& pose = scene.poses[d].poses[static_cast<std::size_t>(f)].pose;
      for (int k = 0; k < 4; ++k) {
        frame.markers.push_back({scene.bodies[d].marker_ids[k], pose.apply(scene.bodies[d].marker_template[k])});
      }
    }
    scene.markers.push_back(std::move(frame));
  }
  if (options.label_swaps > 0) {
    auto rng = stream(options.seed, 21);
    std::uniform_int_distribution<std::int64_t> frame_dist(0, mocap_frames - 1);
    std::uniform_int_distribution<std::size_t> body_dist(0, scene.bodies.size() - 1);
    std::uniform_int_distribution<int> slot_dist(0, 3);
    std::vector<std::int64_t> swapped;
    while (static_cast<int>(swapped.size()) < std::min<std::int64_t>(options.label_swaps, mocap_frames / 2)) {
      const auto f = frame_dist(rng);
      const bool taken = std::find(swapped.begin(), swapped.end(), f) != swapped.end() ||
                         std::any_of(protected_mocap.begin(), protected_mocap.end(),
                                     [&](std::int64_t p) { return std::abs(p - f) <= 1; });
      if (taken) continue;
      const auto d = body_dist(rng);
      const int a = slot_dist(rng);
      const int b = (a + 1 + slot_dist(rng) % 3) % 4;
      auto& markers = scene.markers[static_cast<std::size_t>(f)].markers;
      std::swap(markers[4 * d + a].position, markers[4 * d + b].position);
      swapped.push_back(f);
    }
    std::sort(swapped.begin(), swapped.end());
    scene.swapped_frames = swapped;
  }

  // Manual keypoint clicks on evenly spread frames.
  {
    auto rng = stream(options.seed, 31);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < options.annotated_frames; ++k) {
      scene.annotated.push_back(static_cast<std::int64_t>(std::llround(
          (k + 1) * static_cast<double>(options.video_frames) / (options.annotated_frames + 1))));
    }
    for (std::size_t i = 0; i < scene.individuals.size(); ++i) {
      for (const auto v : scene.annotated) {
        const auto world = scene.keypoints_at(i, v);
        for (const auto& cam : scene.cameras) {
          for (const Keypoint kp : kAllKeypoints) {
            ManualAnnotation a{scene.individuals[i], cam.id, v, kp, std::nullopt};
            const auto proj = project(cam.model, world[index(kp)]);
            const double dx = noise(rng);
            const double dy = noise(rng);
            const bool hidden = unit(rng) < options.occlusion;
            if (proj.visible && !hidden) a.pixel = proj.pixel + options.click_noise_px * Pixel(dx, dy);
            scene.clicks.push_back(std::move(a));
          }
        }
      }
    }
  }

  // Marker clicks for extrinsic calibration.
  {
    auto rng = stream(options.seed, 41);
    std::normal_distribution<double> noise(0.0, options.calibration_noise_px);
    for (const auto& cam : scene.cameras) {
      for (const auto v : calibration_frames) {
        io::RawObservation obs{cam.id, v, {}};
        const auto& frame = scene.markers[static_cast<std::size_t>(scene.clock.map_frame(v))];
        for (const auto& m : frame.markers) {
          const auto proj = project(cam.model, *m.position);
          const double dx = noise(rng);
          const double dy = noise(rng);
          if (proj.visible) obs.clicks.push_back({m.id, proj.pixel + Pixel(dx, dy)});
        }
        if (!obs.clicks.empty()) scene.calibration_clicks.push_back(std::move(obs));
      }
    }
  }

  // Detector output for every frame, individual and view.
  {
    auto rng = stream(options.seed, 51);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::int64_t v = 0; v < options.video_frames; ++v) {
      for (std::size_t i = 0; i < scene.individuals.size(); ++i) {
        const auto world = scene.keypoints_at(i, v);
        for (const auto& cam : scene.cameras) {
          const bool corrupt = options.corruption > 0.0 && unit(rng) < options.corruption;
          bool any = false;
          for (const Keypoint kp : kAllKeypoints) {
            const auto proj = project(cam.model, world[index(kp)]);
            Pixel px = proj.pixel + options.prediction_noise_px * Pixel(noise(rng), noise(rng));
            const double angle = 2.0 * std::numbers::pi * unit(rng);
            const double size = options.corruption_px * (1.0 + unit(rng));
            const double confidence = 0.6 + 0.4 * unit(rng);
            if (!proj.visible) continue;
            if (corrupt && keypoint_part(kp) == BodyPart::Head) px += size * Pixel(std::cos(angle), std::sin(angle));
            scene.predictions.push_back({v, scene.individuals[i], cam.id, kp, px, confidence});
            any = true;
          }
          if (corrupt && any) scene.corrupted.push_back({v, scene.individuals[i], cam.id});
        }
      }
    }
    std::sort(scene.corrupted.begin(), scene.corrupted.end());
  }
  return scene;
}

void write_scene(const Scene& scene, const fs::path& dir) {
  fs::create_directories(dir / "cameras");
  fs::create_directories(dir / "truth" / "templates");
  const auto& opts = scene.options;

  for (const auto& cam : scene.cameras) io::write_camera(dir / "cameras" / (cam.id + ".json"), cam);
  io::write_text_atomic(dir / "bodies.json", io::bodies_to_json(scene.bodies).dump(2) + "\n");
  io::write_text_atomic(dir / "markers.csv", io::format_markers(scene.markers));

  std::string counts = "frame,count\n";
  for (std::size_t f = 0; f < scene.sync_counts.size(); ++f) counts += fmt::format("{},{}\n", f, scene.sync_counts[f]);
  io::write_text_atomic(dir / "sync_counts.csv", counts);
  std::string intensity = "frame,intensity\n";
  for (std::size_t f = 0; f < scene.intensity.samples.size(); ++f) {
    intensity += fmt::format("{},{}\n", f, scene.intensity.samples[f]);
  }
  io::write_text_atomic(dir / "intensity.csv", intensity);

  io::write_text_atomic(dir / "annotations.json", io::annotations_to_json(scene.clicks).dump(2) + "\n");
  io::write_text_atomic(dir / "calibration_clicks.json",
                        io::calibration_clicks_to_json(scene.calibration_clicks).dump(2) + "\n");
  io::write_text_atomic(dir / "predictions.csv", io::format_predictions(scene.predictions));

  // Truth, in the same formats the pipeline emits.
  for (const auto& t : scene.templates) {
    io::write_text_atomic(dir / "truth" / "templates" / (t.individual_id + ".json"),
                          io::template_to_json(t).dump(2) + "\n");
  }
  std::vector<AnnotatedFrame> truth;
  truth.reserve(static_cast<std::size_t>(opts.video_frames));
  for (std::int64_t v = 0; v < opts.video_frames; ++v) {
    AnnotatedFrame frame{v, scene.clock.map_frame(v), {}};
    for (std::size_t i = 0; i < scene.individuals.size(); ++i) {
      IndividualAnnotation ind;
      ind.individual_id = scene.individuals[i];
      ind.valid = true;
      ind.world = scene.keypoints_at(i, v);
      for (const auto& cam : scene.cameras) {
        ViewAnnotation view{cam.id, {}, std::nullopt};
        for (const Keypoint kp : kAllKeypoints) view.keypoints[index(kp)] = project(cam.model, ind.world[index(kp)]);
        const auto pixels = visible_pixels(ind.world, cam.model);
        view.box = bounding_box(pixels, cam.model.intrinsics().width, cam.model.intrinsics().height);
        ind.views.push_back(std::move(view));
      }
      frame.individuals.push_back(std::move(ind));
    }
    truth.push_back(std::move(frame));
  }
  const auto files = io::format_annotations(truth);
  for (const auto& [cam, text] : files.per_camera_2d) io::write_text_atomic(dir / "truth" / fmt::format("kp2d_{}.csv", cam), text);
  io::write_text_atomic(dir / "truth" / "kp3d.csv", files.keypoints_3d);
  io::write_text_atomic(dir / "truth" / "boxes.csv", files.boxes);

  std::string corrupted = "frame,individual,camera\n";
  for (const auto& k : scene.corrupted) corrupted += fmt::format("{},{},{}\n", k.frame, k.individual, k.camera);
  io::write_text_atomic(dir / "truth" / "corrupted.csv", corrupted);
  std::string swaps = "frame\n";
  for (const auto f : scene.swapped_frames) swaps += fmt::format("{}\n", f);
  io::write_text_atomic(dir / "truth" / "label_swaps.csv", swaps);
  const nlohmann::json clock = {{"offset", scene.clock.offset}, {"rate", scene.clock.rate_ratio}};
  io::write_text_atomic(dir / "truth" / "clock.json", clock.dump(2) + "\n");

  if (opts.images) {
    for (const auto& cam : scene.cameras) {
      const fs::path frames = dir / "frames" / cam.id;
      fs::create_directories(frames);
      const auto& k = cam.model.intrinsics();
      for (const auto v : scene.annotated) {
        cv::Mat image(k.height, k.width, CV_8UC1, cv::Scalar(40));
        for (std::size_t i = 0; i < scene.individuals.size(); ++i) {
          for (const auto& px : visible_pixels(scene.keypoints_at(i, v), cam.model)) {
            cv::circle(image, cv::Point(static_cast<int>(std::lround(px.x())), static_cast<int>(std::lround(px.y()))),
                       10, cv::Scalar(220), cv::FILLED);
          }
        }
        cv::imwrite((frames / fmt::format("frame_{:06d}.png", v)).string(), image, {cv::IMWRITE_PNG_COMPRESSION, 1});
      }
    }
  }

  SequenceManifest m;
  m.source = fs::absolute(dir / "manifest.toml");
  const fs::path base = m.source.parent_path();
  m.sequence_id = fmt::format("synth-{}", opts.seed);
  m.video_frames = opts.video_frames;
  m.seed = opts.seed;
  m.individuals = scene.individuals;
  m.markers = base / "markers.csv";
  m.bodies = base / "bodies.json";
  m.sync_counts = base / "sync_counts.csv";
  m.annotations = base / "annotations.json";
  m.calibration_clicks = base / "calibration_clicks.json";
  m.predictions = base / "predictions.csv";
  m.tracks = base / "tracks.csv";
  m.templates = base / "templates";
  for (const auto& cam : scene.cameras) {
    CameraEntry e{cam.id, base / "cameras" / (cam.id + ".json"), {}, base / "intensity.csv", scene.clock};
    if (opts.images) e.frames = base / "frames" / cam.id;
    m.cameras.push_back(std::move(e));
  }
  save_manifest(m);
}

}  // namespace keyprop::synth
