#include "keyprop/io.hpp"
#include "keyprop/manifest.hpp"
#include "keyprop/synth.hpp"
#include "keyprop/toml_lite.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace keyprop;
using testing::throws_code;
using nlohmann::json;

namespace {

void put(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("toml subset parses scalars, arrays and tables") {
  const auto doc = toml_lite::parse(R"(# experiment
seed = 42
fraction = 0.25   # trailing comment
name = "run #1"
flags = [true, false]
sizes = [30, 90,]
big = 1_000

[paths]
out = "results/a.json"

[[cameras]]
id = "cam0"
rate = 3e1

[[cameras]]
id = "cam1"
)");
  CHECK(doc["seed"] == 42);
  CHECK(doc["seed"].is_number_integer());
  CHECK(doc["fraction"] == 0.25);
  CHECK(doc["name"] == "run #1");
  CHECK(doc["flags"] == json::array({true, false}));
  CHECK(doc["sizes"] == json::array({30, 90}));
  CHECK(doc["big"] == 1000);
  CHECK(doc["paths"]["out"] == "results/a.json");
  REQUIRE(doc["cameras"].size() == 2);
  CHECK(doc["cameras"][0]["rate"] == 30.0);
  CHECK(doc["cameras"][1]["id"] == "cam1");
}

TEST_CASE("toml dump parses back to the same document") {
  json doc = {{"a", 1}, {"b", 2.5}, {"c", "x\"y"}, {"d", json::array({1, 2})}, {"e", 3.0}};
  doc["t"] = {{"k", true}};
  doc["arr"] = json::array({{{"id", "cam0"}}, {{"id", "cam1"}, {"offset", 137.25}}});
  const auto text = toml_lite::dump(doc);
  CHECK(toml_lite::parse(text) == doc);
  CHECK(toml_lite::dump(toml_lite::parse(text)) == text);
  CHECK(text.find("e = 3.0") != std::string::npos);
}

TEST_CASE("toml errors carry the line number") {
  auto message = [](std::string_view text) {
    try {
      toml_lite::parse(text);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ParseError);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("a = 1\nb = \n").find("line 2") != std::string::npos);
  CHECK(message("a = 1\na = 2\n").find("line 2") != std::string::npos);
  CHECK(message("a = \"open\n").find("line 1") != std::string::npos);
  CHECK(message("a = [1, 2\n").find("line 1") != std::string::npos);
  CHECK(message("[t\n").find("line 1") != std::string::npos);
  CHECK(message("x = 1.2.3\n").find("line 1") != std::string::npos);
  CHECK(message("just words\n").find("line 1") != std::string::npos);
}

TEST_CASE("atomic writes replace the file") {
  const auto dir = testing::scratch_dir("atomic");
  const auto p = dir / "f.txt";
  io::write_text_atomic(p, "one");
  io::write_text_atomic(p, "two\n");
  CHECK(io::read_text(p) == "two\n");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  CHECK(throws_code([&] { io::read_text(dir / "missing.txt"); }, ErrorCode::MissingFile));
}

TEST_CASE("camera json round-trip") {
  const auto cam = synth::rig_cameras()[2];
  const auto back = io::camera_from_json(io::camera_to_json(cam));
  CHECK(back.id == cam.id);
  CHECK(back.model.intrinsics().fx == cam.model.intrinsics().fx);
  CHECK(back.model.intrinsics().distortion.p2 == cam.model.intrinsics().distortion.p2);
  CHECK(back.model.intrinsics().width == 3840);
  CHECK((back.model.extrinsic().matrix() - cam.model.extrinsic().matrix()).norm() == 0.0);

  auto j = io::camera_to_json(cam);
  j["extrinsic"].erase(0);
  CHECK(throws_code([&] { io::camera_from_json(j); }, ErrorCode::ParseError));
  j = io::camera_to_json(cam);
  j.erase("fx");
  CHECK(throws_code([&] { io::camera_from_json(j); }, ErrorCode::ParseError));
}

TEST_CASE("markers csv round-trip keeps invalid rows") {
  const auto dir = testing::scratch_dir("markers");
  std::vector<MarkerFrame> frames(2);
  frames[0].frame_index = 0;
  frames[0].markers = {{"a", Point3(1.5, -2.25, 1e-7)}, {"b", std::nullopt}};
  frames[1].frame_index = 1;
  frames[1].markers = {{"a", Point3(1.0 / 3.0, 2, 3)}, {"b", Point3(4, 5, 6)}};
  io::write_text_atomic(dir / "m.csv", io::format_markers(frames));
  const auto back = io::read_markers(dir / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].markers[0].position == frames[0].markers[0].position);
  CHECK_FALSE(back[0].markers[1].position.has_value());
  CHECK(back[1].markers[0].position->x() == 1.0 / 3.0);

  put(dir / "bad.csv", "frame,marker,x,y,z,valid\n");
  CHECK(throws_code([&] { io::read_markers(dir / "bad.csv"); }, ErrorCode::ParseError));
  put(dir / "short.csv", "frame,marker_id,x,y,z,valid\n0,a,1,2\n");
  CHECK(throws_code([&] { io::read_markers(dir / "short.csv"); }, ErrorCode::ParseError));
  put(dir / "nan.csv", "frame,marker_id,x,y,z,valid\n0,a,1,2,zz,1\n");
  CHECK(throws_code([&] { io::read_markers(dir / "nan.csv"); }, ErrorCode::ParseError));
}

TEST_CASE("tracks csv round-trip") {
  synth::SceneOptions o;
  o.video_frames = 30;
  o.images = false;
  const auto scene = synth::generate(o);
  auto tracks = scene.poses;
  tracks[1].poses[4].valid = false;
  const auto dir = testing::scratch_dir("tracks");
  io::write_text_atomic(dir / "t.csv", io::format_tracks(tracks));
  const auto back = io::read_tracks(dir / "t.csv", scene.bodies);
  REQUIRE(back.size() == tracks.size());
  for (std::size_t d = 0; d < tracks.size(); ++d) {
    REQUIRE(back[d].poses.size() == tracks[d].poses.size());
    for (std::size_t f = 0; f < tracks[d].poses.size(); ++f) {
      CHECK(back[d].poses[f].valid == tracks[d].poses[f].valid);
      CHECK(back[d].poses[f].pose.matrix() == tracks[d].poses[f].pose.matrix());
    }
  }
}

TEST_CASE("sync traces must be consecutive") {
  const auto dir = testing::scratch_dir("traces");
  put(dir / "i.csv", "frame,intensity\n0,40\n1,41.5\n2,200\n");
  const auto s = io::read_intensity(dir / "i.csv", 30.0);
  CHECK(s.samples == std::vector<double>{40, 41.5, 200});
  put(dir / "gap.csv", "frame,intensity\n0,40\n2,41.5\n");
  CHECK(throws_code([&] { io::read_intensity(dir / "gap.csv", 30.0); }, ErrorCode::ParseError));
  put(dir / "c.csv", "frame,count\n0,4\n1,6\n");
  CHECK(io::read_marker_counts(dir / "c.csv") == std::vector<int>{4, 6});
}

TEST_CASE("annotation documents") {
  const json doc = json::parse(R"([
    {"individual_id": "bird1", "camera_id": "cam0", "video_frame": 5, "keypoint": "beak", "occluded": false, "u": 10.5, "v": 20},
    {"individual_id": "bird1", "camera_id": "cam1", "video_frame": 5, "keypoint": "tail", "occluded": true}
  ])");
  const auto a = io::annotations_from_json(doc);
  REQUIRE(a.size() == 2);
  CHECK(*a[0].pixel == Pixel(10.5, 20));
  CHECK(a[1].occluded());
  CHECK(io::annotations_from_json(io::annotations_to_json(a)).size() == 2);
  CHECK(io::annotations_to_json(a) == doc);

  auto bad = doc;
  bad[0]["keypoint"] = "wingtip";
  CHECK(throws_code([&] { io::annotations_from_json(bad); }, ErrorCode::ParseError));
  bad = doc;
  bad[1] = bad[0];
  CHECK(throws_code([&] { io::annotations_from_json(bad); }, ErrorCode::ParseError));
  bad = doc;
  bad[1]["u"] = 3.0;
  CHECK(throws_code([&] { io::annotations_from_json(bad); }, ErrorCode::ParseError));
  bad = doc;
  bad[0].erase("v");
  CHECK(throws_code([&] { io::annotations_from_json(bad); }, ErrorCode::ParseError));
  CHECK(throws_code([&] { io::annotations_from_json(json::object()); }, ErrorCode::ParseError));
}

TEST_CASE("calibration clicks reject a marker clicked twice") {
  const json doc = json::parse(R"([{"camera_id": "cam0", "video_frame": 3,
    "clicks": [{"marker_id": "m1", "u": 1, "v": 2}, {"marker_id": "m2", "u": 3, "v": 4}]}])");
  const auto obs = io::calibration_clicks_from_json(doc);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].clicks.size() == 2);
  CHECK(io::calibration_clicks_to_json(obs) == doc);
  auto twice = doc;
  twice[0]["clicks"][1]["marker_id"] = "m1";
  CHECK(throws_code([&] { io::calibration_clicks_from_json(twice); }, ErrorCode::ParseError));
}

TEST_CASE("template json round-trip") {
  KeypointTemplate t;
  t.individual_id = "bird7";
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    KeypointEstimate e;
    e.offset = Point3(k, -0.5 * k, 1.0 / (k + 1));
    e.samples = static_cast<int>(k);
    if (k % 2) e.spread = Eigen::Vector3d(0.1, 0.2, 0.3);
    t.keypoints[k] = e;
  }
  const auto back = io::template_from_json(io::template_to_json(t));
  CHECK(back.individual_id == "bird7");
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    CHECK(back.keypoints[k]->offset == t.keypoints[k]->offset);
    CHECK(back.keypoints[k]->samples == t.keypoints[k]->samples);
    CHECK(back.keypoints[k]->spread.has_value() == (k % 2 == 1));
  }
}

TEST_CASE("predictions csv") {
  const auto dir = testing::scratch_dir("predictions");
  const std::vector<PredictionRecord> preds{{3, "bird1", "cam0", Keypoint::Nose, Pixel(1.25, 2.5), 0.75}};
  io::write_text_atomic(dir / "p.csv", io::format_predictions(preds));
  const auto back = io::read_predictions(dir / "p.csv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].keypoint == Keypoint::Nose);
  CHECK(back[0].pixel == Pixel(1.25, 2.5));
  CHECK(back[0].confidence == 0.75);
  put(dir / "bad.csv", "frame,individual,camera,keypoint,u,v,confidence\n3,bird1,cam0,nose,1,2,1.5\n");
  CHECK(throws_code([&] { io::read_predictions(dir / "bad.csv"); }, ErrorCode::ParseError));
}

TEST_CASE("manifest load, resolve and save") {
  const auto dir = testing::scratch_dir("manifest");
  synth::SceneOptions o;
  o.video_frames = 60;
  o.annotated_frames = 2;
  const auto scene = synth::generate(o);
  synth::write_scene(scene, dir);

  auto m = load_manifest(dir / "manifest.toml");
  CHECK(m.sequence_id == "synth-1");
  CHECK(m.video_frames == 60);
  CHECK(m.individuals == std::vector<std::string>{"bird1", "bird2"});
  CHECK(m.markers == dir / "markers.csv");
  REQUIRE(m.cameras.size() == 4);
  CHECK(m.camera("cam2").calibration == dir / "cameras" / "cam2.json");
  CHECK(m.clock().offset == 137.0);
  CHECK(m.template_path("bird2") == dir / "templates" / "bird2.json");
  CHECK(throws_code([&] { m.camera("cam9"); }, ErrorCode::InvalidManifest));
  CHECK(load_cameras(m).size() == 4);

  // Saving writes relative paths and reloads to the same manifest.
  const auto text = format_manifest(m);
  CHECK(text.find(dir.string()) == std::string::npos);
  m.cameras[1].clock->offset = 140.5;
  save_manifest(m);
  const auto again = load_manifest(dir / "manifest.toml");
  CHECK(again.clock("cam1").offset == 140.5);
  CHECK(format_manifest(again) == format_manifest(m));

  auto unsynced = m;
  unsynced.cameras[0].clock.reset();
  CHECK(throws_code([&] { unsynced.clock(); }, ErrorCode::InvalidManifest));
}

TEST_CASE("manifest validation") {
  const auto dir = testing::scratch_dir("manifest_bad");
  synth::SceneOptions o;
  o.video_frames = 30;
  o.annotated_frames = 0;
  o.images = false;
  synth::write_scene(synth::generate(o), dir);
  const auto good = io::read_text(dir / "manifest.toml");

  auto variant = [&](const std::string& from, const std::string& to) {
    auto text = good;
    const auto at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
    put(dir / "variant.toml", text);
    return dir / "variant.toml";
  };
  CHECK(throws_code([&] { load_manifest(variant("markers = \"markers.csv\"", "markers = \"nope.csv\"")); },
                    ErrorCode::MissingFile));
  CHECK(throws_code([&] { load_manifest(variant("mocap_rate = 100.0", "mocap_rate = -1.0")); },
                    ErrorCode::InvalidManifest));
  CHECK(throws_code([&] { load_manifest(variant("id = \"cam1\"", "id = \"cam0\"")); }, ErrorCode::InvalidManifest));
  CHECK(throws_code([&] { load_manifest(variant("markers = \"markers.csv\"\n", "")); }, ErrorCode::InvalidManifest));
  CHECK(throws_code([&] { load_manifest(variant("seed = 1", "seed = ")); }, ErrorCode::ParseError));
  CHECK(throws_code([&] { load_manifest(dir / "absent.toml"); }, ErrorCode::MissingFile));
}
