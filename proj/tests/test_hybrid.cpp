#include "keyprop/hybrid.hpp"
#include "keyprop/synth.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace keyprop;
using testing::throws_code;

namespace {

KeypointTrack line_track(std::size_t n) {
  KeypointTrack t;
  for (std::size_t f = 0; f < n; ++f) {
    KeypointFrame kf;
    kf.frame = static_cast<std::int64_t>(f) + 100;
    for (std::size_t k = 0; k < kKeypointCount; ++k) kf.points[k] = Point3(f * 2.0, k * 1.0, -3.0 * f);
    t.push_back(kf);
  }
  return t;
}

}  // namespace

TEST_CASE("gaps are seeded, separated and away from the ends") {
  const auto track = line_track(1000);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const GapSpec spec{0.25, 30, 90, seed};
    const auto g = introduce_gaps(track, spec);
    std::size_t removed = 0;
    for (std::size_t i = 0; i < g.gaps.size(); ++i) {
      const auto& gap = g.gaps[i];
      CHECK(gap.length() >= 30);
      CHECK(gap.length() <= 90);
      CHECK(gap.begin >= 1);
      CHECK(gap.end <= 999);
      if (i > 0) CHECK(gap.begin > g.gaps[i - 1].end);
      removed += gap.length();
    }
    CHECK(removed <= 250);
    CHECK(removed + 30 > 250);
    std::size_t empty = 0;
    for (const auto& f : g.track)
      if (!f.points[0]) ++empty;
    CHECK(empty == removed);
    CHECK(introduce_gaps(track, spec).gaps == g.gaps);
  }
  CHECK(introduce_gaps(track, {0.25, 30, 90, 1}).gaps != introduce_gaps(track, {0.25, 30, 90, 2}).gaps);
  CHECK(introduce_gaps(track, {0.0, 30, 90, 1}).gaps.empty());
}

TEST_CASE("infeasible gap specs") {
  const auto track = line_track(80);
  CHECK(throws_code([&] { introduce_gaps(track, {0.25, 30, 90, 0}); }, ErrorCode::InfeasibleSpec));
  CHECK(throws_code([&] { introduce_gaps(line_track(500), {0.25, 50, 40, 0}); }, ErrorCode::InfeasibleSpec));
  CHECK(throws_code([&] { introduce_gaps(line_track(500), {1.0, 30, 90, 0}); }, ErrorCode::InfeasibleSpec));
  CHECK(throws_code([&] { introduce_gaps(line_track(100), {0.9, 5, 5, 0}); }, ErrorCode::InfeasibleSpec));
}

TEST_CASE("linear fill is exact on straight-line motion") {
  const auto track = line_track(300);
  const auto g = introduce_gaps(track, {0.25, 30, 90, 3});
  const auto filled = fill_linear(g);
  for (std::size_t i = 0; i < track.size(); ++i) {
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      REQUIRE(filled[i].points[k].has_value());
      CHECK((*filled[i].points[k] - *track[i].points[k]).norm() < 1e-9);
    }
  }
  GappedTrack edge{track, {{0, 10}}};
  CHECK(throws_code([&] { fill_linear(edge); }, ErrorCode::BoundaryGap));
  GappedTrack tail{track, {{290, 300}}};
  CHECK(throws_code([&] { fill_linear(tail); }, ErrorCode::BoundaryGap));
}

TEST_CASE("triangulation fill recovers exact detections") {
  synth::SceneOptions o;
  o.individuals = 1;
  o.video_frames = 400;
  o.annotated_frames = 0;
  o.calibration_frames = 0;
  o.images = false;
  const auto scene = synth::generate(o);
  KeypointTrack truth;
  for (std::int64_t v = 0; v < 400; ++v) {
    KeypointFrame kf;
    kf.frame = v;
    const auto w = scene.keypoints_at(0, v);
    for (std::size_t k = 0; k < kKeypointCount; ++k) kf.points[k] = w[k];
    truth.push_back(kf);
  }
  const auto g = introduce_gaps(truth, {0.25, 30, 90, 4});
  auto preds = scene.predictions;
  // Leave a single view for one keypoint in one gap frame.
  const auto lonely = static_cast<std::int64_t>(g.gaps[0].begin);
  std::erase_if(preds, [&](const PredictionRecord& p) {
    return p.video_frame == lonely && p.keypoint == Keypoint::Tail && p.camera != "cam2";
  });
  const auto tri = fill_triangulation(g, preds, scene.cameras, "bird1");
  REQUIRE(tri.unfilled.size() == 1);
  CHECK(tri.unfilled[0] == std::pair<std::int64_t, Keypoint>{lonely, Keypoint::Tail});
  double worst = 0.0;
  for (const auto& gap : g.gaps) {
    for (std::size_t i = gap.begin; i < gap.end; ++i) {
      for (std::size_t k = 0; k < kKeypointCount; ++k) {
        if (!tri.track[i].points[k]) continue;
        worst = std::max(worst, (*tri.track[i].points[k] - *truth[i].points[k]).norm());
      }
    }
  }
  CHECK(worst < 1e-6);

  const std::vector<std::pair<std::string, KeypointTrack>> fills{{"triangulation", tri.track},
                                                                  {"linear", fill_linear(g)}};
  const auto cmp = compare_fills(truth, fills, g.gaps);
  REQUIRE(cmp.methods == std::vector<std::string>{"triangulation", "linear"});
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    REQUIRE(cmp.rmse_mm[0][k].has_value());
    CHECK(cmp.rmse_mm[0][k]->value < 1e-6);
    CHECK(cmp.rmse_mm[1][k]->value > 1.0);  // the birds move on curves
  }
}
