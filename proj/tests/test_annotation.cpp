#include "keyprop/annotation.hpp"
#include "keyprop/synth.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace keyprop;
using testing::throws_code;

namespace {

synth::Scene small_scene(double click_noise = 0.0, int annotated = 5, std::uint64_t seed = 1) {
  synth::SceneOptions o;
  o.seed = seed;
  o.video_frames = 200;
  o.annotated_frames = annotated;
  o.click_noise_px = click_noise;
  o.calibration_frames = 0;
  o.images = false;
  return synth::generate(o);
}

}  // namespace

TEST_CASE("keypoint names round-trip") {
  for (const auto kp : kAllKeypoints) CHECK(parse_keypoint(keypoint_name(kp)) == kp);
  CHECK_FALSE(parse_keypoint("wingtip").has_value());
  CHECK(keypoint_part(Keypoint::RightEye) == BodyPart::Head);
  CHECK(keypoint_part(Keypoint::LeftShoulder) == BodyPart::Backpack);
}

TEST_CASE("noiseless clicks reproduce the template offsets") {
  const auto scene = small_scene();
  for (std::size_t i = 0; i < scene.individuals.size(); ++i) {
    const auto est = estimate_template(scene.clicks, scene.cameras, scene.poses[2 * i], scene.poses[2 * i + 1],
                                       scene.clock);
    CHECK(est.warnings.empty());
    CHECK(est.keypoint_template.usable());
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      const auto& got = est.keypoint_template.keypoints[k];
      const auto& truth = scene.templates[i].keypoints[k];
      REQUIRE(got.has_value());
      CHECK((got->offset - truth->offset).norm() < 1e-6);
      CHECK(got->samples == 5);
      REQUIRE(got->spread.has_value());
      CHECK(got->spread->maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("noisy clicks stay within a few millimetres") {
  const auto scene = small_scene(1.0, 8, 4);
  const auto est = estimate_template(scene.clicks, scene.cameras, scene.poses[0], scene.poses[1], scene.clock);
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    CHECK((est.keypoint_template.keypoints[k]->offset - scene.templates[0].keypoints[k]->offset).norm() < 5.0);
  }
}

TEST_CASE("a single view per frame is not enough") {
  auto scene = small_scene();
  std::vector<ManualAnnotation> clicks;
  for (const auto& c : scene.clicks) {
    if (c.keypoint == Keypoint::Tail && c.camera_id != "cam0") continue;
    clicks.push_back(c);
  }
  CHECK(throws_code([&] { estimate_template(clicks, scene.cameras, scene.poses[0], scene.poses[1], scene.clock); },
                    ErrorCode::InsufficientViews));
}

TEST_CASE("missing poses at every annotated frame") {
  auto scene = small_scene();
  auto head = scene.poses[0];
  for (auto& p : head.poses) p.valid = false;
  CHECK(throws_code([&] { estimate_template(scene.clicks, scene.cameras, head, scene.poses[1], scene.clock); },
                    ErrorCode::InvalidPose));
  // One bad frame is only a warning.
  head = scene.poses[0];
  head.poses[static_cast<std::size_t>(scene.clock.map_frame(scene.annotated[0]))].valid = false;
  const auto est = estimate_template(scene.clicks, scene.cameras, head, scene.poses[1], scene.clock);
  CHECK_FALSE(est.warnings.empty());
  CHECK(est.keypoint_template.keypoints[0]->samples == 4);
  CHECK(est.keypoint_template.keypoints[8]->samples == 5);
}

TEST_CASE("an outlying click is gated out") {
  auto scene = small_scene(0.0, 7);
  for (auto& c : scene.clicks) {
    if (c.individual_id == "bird1" && c.keypoint == Keypoint::Beak && c.video_frame == scene.annotated[3] &&
        c.pixel) {
      *c.pixel += Pixel(40, -25);
    }
  }
  const auto est = estimate_template(scene.clicks, scene.cameras, scene.poses[0], scene.poses[1], scene.clock);
  const auto& beak = *est.keypoint_template.keypoints[index(Keypoint::Beak)];
  CHECK(beak.samples == 6);
  CHECK((beak.offset - scene.templates[0].keypoints[0]->offset).norm() < 1e-6);
}

TEST_CASE("bounding boxes grow by the margin and clip to the image") {
  const std::vector<Pixel> pts{{100, 200}, {300, 150}, {250, 400}};
  const auto box = bounding_box(pts, 3840, 2160);
  REQUIRE(box.has_value());
  CHECK(box->x_min == 40.0);
  CHECK(box->y_min == 90.0);
  CHECK(box->x_max == 360.0);
  CHECK(box->y_max == 460.0);

  const std::vector<Pixel> edge{{10, 2150}, {3830, 2100}};
  const auto clipped = bounding_box(edge, 3840, 2160, 60.0);
  CHECK(clipped->x_min == 0.0);
  CHECK(clipped->x_max == 3840.0);
  CHECK(clipped->y_max == 2160.0);
  CHECK(clipped->y_min == 2040.0);

  CHECK_FALSE(bounding_box({}, 100, 100).has_value());
}

TEST_CASE("overlap is measured against the first box") {
  const BoundingBox a{0, 0, 100, 100};
  const BoundingBox b{50, 50, 250, 250};
  CHECK(overlap_fraction(a, b) == doctest::Approx(0.25));
  CHECK(overlap_fraction(b, a) == doctest::Approx(2500.0 / 40000.0));
  CHECK(overlap_fraction(a, BoundingBox{200, 200, 300, 300}) == 0.0);
}

TEST_CASE("crowded crops are excluded") {
  AnnotatedFrame frame;
  auto with_box = [](const std::string& id, std::optional<BoundingBox> box) {
    IndividualAnnotation ind;
    ind.individual_id = id;
    ind.valid = true;
    ViewAnnotation v;
    v.camera_id = "cam0";
    v.box = box;
    ind.views.push_back(v);
    return ind;
  };
  frame.individuals.push_back(with_box("a", BoundingBox{0, 0, 100, 100}));     // 36% covered by b
  frame.individuals.push_back(with_box("b", BoundingBox{40, 40, 400, 400}));   // 2.8% covered by a
  frame.individuals.push_back(with_box("c", BoundingBox{1000, 0, 1100, 100}));
  frame.individuals.push_back(with_box("d", std::nullopt));
  const auto keep = filter_training_crops(frame);
  CHECK_FALSE(keep[0][0]);
  CHECK(keep[1][0]);
  CHECK(keep[2][0]);
  CHECK_FALSE(keep[3][0]);
  CHECK(filter_training_crops(frame, 0.5)[0][0]);
}

TEST_CASE("propagation matches the oracle projection of the true keypoints") {
  const auto scene = small_scene();
  const auto frames =
      propagate_sequence(scene.templates, scene.poses, scene.cameras, scene.clock, 0, 200, PropagationOptions{60.0, 3});
  REQUIRE(frames.size() == 200);
  double worst = 0.0;
  for (const auto& f : frames) {
    CHECK(f.mocap_frame == scene.clock.map_frame(f.video_frame));
    for (std::size_t i = 0; i < f.individuals.size(); ++i) {
      const auto& ind = f.individuals[i];
      REQUIRE(ind.valid);
      const auto truth = scene.keypoints_at(i, f.video_frame);
      for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
        const auto& cam = scene.cameras[c].model;
        for (std::size_t k = 0; k < kKeypointCount; ++k) {
          const Pixel expected = testing::oracle_project(cam.intrinsics(), cam.extrinsic(), truth[k]);
          worst = std::max(worst, (ind.views[c].keypoints[k].pixel - expected).norm());
        }
      }
    }
  }
  CHECK(worst < 1e-6);

  // Thread count does not change the output.
  const auto serial =
      propagate_sequence(scene.templates, scene.poses, scene.cameras, scene.clock, 0, 200, PropagationOptions{60.0, 1});
  for (std::size_t f = 0; f < 200; ++f) {
    for (std::size_t i = 0; i < serial[f].individuals.size(); ++i) {
      for (std::size_t k = 0; k < kKeypointCount; ++k) {
        CHECK(serial[f].individuals[i].world[k] == frames[f].individuals[i].world[k]);
      }
    }
  }
}

TEST_CASE("propagation needs both poses and a usable template") {
  const auto scene = small_scene();
  const auto cams = std::span<const Camera>(scene.cameras);
  CHECK_FALSE(propagate_frame(scene.templates[0], std::nullopt, RigidTransform{}, cams).valid);
  CHECK(propagate_frame(scene.templates[0], RigidTransform{}, RigidTransform{}, cams).valid);
  auto partial = scene.templates[0];
  partial.keypoints[3].reset();
  CHECK_FALSE(partial.usable());
  const std::vector<KeypointTemplate> bad{partial};
  CHECK(throws_code([&] { propagate_sequence(bad, scene.poses, scene.cameras, scene.clock, 0, 1); },
                    ErrorCode::InvalidArgument));
}
