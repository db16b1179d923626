#include "keyprop/calibration.hpp"
#include "keyprop/synth.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace keyprop;
using testing::throws_code;

namespace {

std::vector<ExtrinsicObservation> observe(const CameraModel& cam, std::mt19937_64& rng, int frames, double noise_px,
                                          const Point3& lo, const Point3& hi) {
  std::normal_distribution<double> n(0.0, noise_px);
  std::vector<ExtrinsicObservation> out;
  for (int f = 0; f < frames; ++f) {
    ExtrinsicObservation o{"cam0", f * 10, {}};
    for (int m = 0; m < 4; ++m) {
      const Point3 w = testing::random_point(rng, lo, hi);
      const auto p = project(cam, w);
      if (!p.visible) continue;
      o.clicks.push_back({"m" + std::to_string(m), p.pixel + Pixel(n(rng), n(rng)), w});
    }
    out.push_back(o);
  }
  return out;
}

}  // namespace

TEST_CASE("principal extents of a box") {
  std::vector<Point3> pts;
  for (int i : {0, 1})
    for (int j : {0, 1})
      for (int k : {0, 1}) pts.emplace_back(400.0 * i, 100.0 * j, 250.0 * k);
  const auto e = principal_extents(pts);
  CHECK(e[0] == doctest::Approx(400.0));
  CHECK(e[1] == doctest::Approx(250.0));
  CHECK(e[2] == doctest::Approx(100.0));

  // Rotating the cloud leaves the extents alone.
  std::mt19937_64 rng(5);
  const Eigen::Matrix3d r = testing::random_rotation(rng);
  for (auto& p : pts) p = r * p + Point3(10, 20, 30);
  const auto er = principal_extents(pts);
  for (int i = 0; i < 3; ++i) CHECK(er[i] == doctest::Approx(e[i]).epsilon(1e-9));
}

TEST_CASE("exact clicks recover the extrinsic") {
  const auto rig = synth::rig_cameras();
  std::mt19937_64 rng(7);
  for (const auto& cam : rig) {
    const auto obs = observe(cam.model, rng, 30, 0.0, Point3(800, 1000, 20), Point3(2800, 3200, 400));
    const auto r = calibrate_extrinsics(obs, cam.model.intrinsics());
    CHECK(testing::rotation_distance(r.camera.extrinsic().rotation(), cam.model.extrinsic().rotation()) < 1e-9);
    CHECK((r.camera.center() - cam.model.center()).norm() < 1e-6);
    CHECK(r.report.rms_px < 1e-6);
    CHECK(r.report.per_observation_rms_px.size() == obs.size());
    CHECK(r.report.principal_extents_mm[2] > 200.0);
  }
}

TEST_CASE("one pixel of click noise keeps the centre within 15 mm") {
  const auto cam = synth::rig_cameras()[1].model;
  std::mt19937_64 rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto obs = observe(cam, rng, 30, 1.0, Point3(800, 1000, 20), Point3(2800, 3200, 400));
    const auto r = calibrate_extrinsics(obs, cam.intrinsics());
    worst = std::max(worst, (r.camera.center() - cam.center()).norm());
    CHECK(r.report.rms_px < 2.0);
  }
  CHECK(worst < 15.0);
}

TEST_CASE("flat or small marker clouds are rejected") {
  const auto cam = synth::rig_cameras()[0].model;
  std::mt19937_64 rng(9);
  // Marker heights within 150 mm: the third extent is below 200 mm.
  const auto flat = observe(cam, rng, 30, 0.0, Point3(800, 1000, 20), Point3(2800, 3200, 170));
  CHECK(throws_code([&] { calibrate_extrinsics(flat, cam.intrinsics()); }, ErrorCode::PoorCoverage));
  const auto tight = observe(cam, rng, 30, 0.0, Point3(1700, 2000, 20), Point3(1880, 2180, 190));
  CHECK(throws_code([&] { calibrate_extrinsics(tight, cam.intrinsics()); }, ErrorCode::PoorCoverage));
}

TEST_CASE("gross click errors raise HighReprojection") {
  const auto cam = synth::rig_cameras()[2].model;
  std::mt19937_64 rng(10);
  const auto noisy = observe(cam, rng, 30, 25.0, Point3(800, 1000, 20), Point3(2800, 3200, 400));
  CHECK(throws_code([&] { calibrate_extrinsics(noisy, cam.intrinsics()); }, ErrorCode::HighReprojection));
}

TEST_CASE("too few clicks") {
  const auto cam = synth::rig_cameras()[0].model;
  std::mt19937_64 rng(11);
  const auto obs = observe(cam, rng, 1, 0.0, Point3(800, 1000, 20), Point3(2800, 3200, 400));
  CHECK(throws_code([&] { calibrate_extrinsics(obs, cam.intrinsics()); }, ErrorCode::PoorCoverage));
}
