#include "keyprop/io.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <atomic>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

namespace keyprop::io {

namespace {

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, fmt::format("{}:{}: {}", path.string(), line, what));
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Line-oriented reader for the fixed-header CSV files.
class CsvReader {
 public:
  CsvReader(const fs::path& path, std::string_view header) : path_(path), text_(read_text(path)) {
    std::string_view first;
    if (!next_line(first)) parse_fail(path_, 1, "empty file");
    if (first != header) parse_fail(path_, 1, fmt::format("expected header '{}', found '{}'", header, first));
    columns_ = split(header).size();
  }

  bool next(std::vector<std::string_view>& fields) {
    std::string_view line;
    while (next_line(line)) {
      if (line.empty()) continue;
      fields = split(line);
      if (fields.size() != columns_) fail(fmt::format("expected {} fields, found {}", columns_, fields.size()));
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const { parse_fail(path_, line_, what); }

  double real(std::string_view s) const {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(fmt::format("invalid number '{}'", s));
    return v;
  }

  std::int64_t integer(std::string_view s) const {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(fmt::format("invalid integer '{}'", s));
    return v;
  }

  bool flag(std::string_view s) const {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    fail(fmt::format("invalid flag '{}'", s));
  }

  Keypoint keypoint(std::string_view s) const {
    auto k = parse_keypoint(s);
    if (!k) fail(fmt::format("unknown keypoint '{}'", s));
    return *k;
  }

 private:
  bool next_line(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    auto end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    line = std::string_view(text_).substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_;
    return true;
  }

  fs::path path_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
  std::size_t columns_ = 0;
};

template <typename T>
T json_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, fmt::format("missing field '{}'", key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("field '{}': {}", key, e.what()));
  }
}

Point3 point_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json point_to_json(const Eigen::Vector3d& p) { return nlohmann::json::array({p.x(), p.y(), p.z()}); }

}  // namespace

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + fmt::format(".tmp{}.{}", ::getpid(), counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingFile, fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp);
      throw Error(ErrorCode::MissingFile, fmt::format("short write to {}", tmp.string()));
    }
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------

nlohmann::json camera_to_json(const Camera& camera) {
  const auto& k = camera.model.intrinsics();
  const Eigen::Matrix4d m = camera.model.extrinsic().matrix();
  nlohmann::json extrinsic = nlohmann::json::array();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) extrinsic.push_back(m(r, c));
  }
  return {{"camera_id", camera.id},
          {"image_size", {k.width, k.height}},
          {"fx", k.fx},
          {"fy", k.fy},
          {"cx", k.cx},
          {"cy", k.cy},
          {"k1", k.distortion.k1},
          {"k2", k.distortion.k2},
          {"k3", k.distortion.k3},
          {"p1", k.distortion.p1},
          {"p2", k.distortion.p2},
          {"extrinsic", extrinsic}};
}

Camera camera_from_json(const nlohmann::json& j) {
  Intrinsics k;
  const auto size = json_get<std::vector<int>>(j, "image_size");
  if (size.size() != 2) throw Error(ErrorCode::ParseError, "image_size must be [width, height]");
  k.width = size[0];
  k.height = size[1];
  k.fx = json_get<double>(j, "fx");
  k.fy = json_get<double>(j, "fy");
  k.cx = json_get<double>(j, "cx");
  k.cy = json_get<double>(j, "cy");
  k.distortion = {json_get<double>(j, "k1"), json_get<double>(j, "k2"), json_get<double>(j, "p1"),
                  json_get<double>(j, "p2"), json_get<double>(j, "k3")};
  const auto ext = json_get<std::vector<double>>(j, "extrinsic");
  if (ext.size() != 16) throw Error(ErrorCode::ParseError, "extrinsic must hold 16 row-major values");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = ext[static_cast<std::size_t>(4 * r + c)];
  }
  return {json_get<std::string>(j, "camera_id"), CameraModel(k, RigidTransform::from_matrix(m))};
}

Camera read_camera(const fs::path& path) {
  try {
    return camera_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_camera(const fs::path& path, const Camera& camera) {
  write_text_atomic(path, camera_to_json(camera).dump(2) + "\n");
}

// ---------------------------------------------------------------------------

std::vector<MarkerFrame> read_markers(const fs::path& path) {
  CsvReader csv(path, "frame,marker_id,x,y,z,valid");
  std::map<std::int64_t, MarkerFrame> frames;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    const auto frame = csv.integer(f[0]);
    auto& mf = frames[frame];
    mf.frame_index = frame;
    MarkerObservation obs{std::string(f[1]), std::nullopt};
    if (csv.flag(f[5])) obs.position = Point3(csv.real(f[2]), csv.real(f[3]), csv.real(f[4]));
    mf.markers.push_back(std::move(obs));
  }
  std::vector<MarkerFrame> out;
  out.reserve(frames.size());
  for (auto& [_, mf] : frames) out.push_back(std::move(mf));
  return out;
}

std::string format_markers(std::span<const MarkerFrame> frames) {
  std::string out = "frame,marker_id,x,y,z,valid\n";
  for (const auto& frame : frames) {
    for (const auto& m : frame.markers) {
      if (m.position) {
        out += fmt::format("{},{},{},{},{},1\n", frame.frame_index, m.id, m.position->x(), m.position->y(),
                           m.position->z());
      } else {
        out += fmt::format("{},{},,,,0\n", frame.frame_index, m.id);
      }
    }
  }
  return out;
}

std::string format_repair_log(std::span<const RepairEntry> log) {
  std::string out = "frame,permutation\n";
  for (const auto& e : log) out += fmt::format("{},{}\n", e.frame_index, e.cycles());
  return out;
}

std::vector<RigidBodyDef> bodies_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "bodies file must be a JSON array");
  std::vector<RigidBodyDef> defs;
  for (const auto& b : j) {
    RigidBodyDef def;
    def.body_id = json_get<std::string>(b, "body_id");
    def.individual_id = json_get<std::string>(b, "individual_id");
    def.part = parse_part(json_get<std::string>(b, "part"));
    const auto ids = json_get<std::vector<std::string>>(b, "marker_ids");
    const auto& tmpl = b.at("template");
    if (ids.size() != 4 || !tmpl.is_array() || tmpl.size() != 4) {
      throw Error(ErrorCode::ParseError, fmt::format("body {}: exactly 4 markers required", def.body_id));
    }
    for (std::size_t k = 0; k < 4; ++k) {
      def.marker_ids[k] = ids[k];
      def.marker_template[k] = point_from_json(tmpl[k]);
    }
    defs.push_back(std::move(def));
  }
  return defs;
}

nlohmann::json bodies_to_json(std::span<const RigidBodyDef> defs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : defs) {
    nlohmann::json tmpl = nlohmann::json::array();
    for (const auto& p : d.marker_template) tmpl.push_back(point_to_json(p));
    arr.push_back({{"body_id", d.body_id},
                   {"individual_id", d.individual_id},
                   {"part", part_name(d.part)},
                   {"marker_ids", d.marker_ids},
                   {"template", tmpl}});
  }
  return arr;
}

std::string format_tracks(std::span<const BodyTrack> tracks) {
  std::string out = "frame,body_id,valid,residual,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n";
  for (const auto& track : tracks) {
    for (const auto& p : track.poses) {
      const auto& r = p.pose.rotation();
      const auto& t = p.pose.translation();
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", p.frame_index, track.body_id,
                         p.valid ? 1 : 0, p.residual, r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1), r(1, 2), r(2, 0),
                         r(2, 1), r(2, 2), t.x(), t.y(), t.z());
    }
  }
  return out;
}

std::vector<BodyTrack> read_tracks(const fs::path& path, std::span<const RigidBodyDef> defs) {
  std::vector<BodyTrack> tracks(defs.size());
  std::map<std::string, std::size_t> by_id;
  for (std::size_t d = 0; d < defs.size(); ++d) {
    tracks[d].body_id = defs[d].body_id;
    tracks[d].individual_id = defs[d].individual_id;
    tracks[d].part = defs[d].part;
    by_id[defs[d].body_id] = d;
  }
  CsvReader csv(path, "frame,body_id,valid,residual,r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz");
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    auto it = by_id.find(std::string(f[1]));
    if (it == by_id.end()) csv.fail(fmt::format("unknown body '{}'", f[1]));
    TrackedPose p;
    p.frame_index = csv.integer(f[0]);
    p.valid = csv.flag(f[2]);
    p.residual = csv.real(f[3]);
    Eigen::Matrix3d r;
    for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = csv.real(f[4 + k]);
    p.pose = RigidTransform(r, Eigen::Vector3d(csv.real(f[13]), csv.real(f[14]), csv.real(f[15])));
    tracks[it->second].poses.push_back(p);
  }
  for (auto& t : tracks) {
    std::stable_sort(t.poses.begin(), t.poses.end(),
                     [](const TrackedPose& a, const TrackedPose& b) { return a.frame_index < b.frame_index; });
  }
  return tracks;
}

// ---------------------------------------------------------------------------

IntensitySignal read_intensity(const fs::path& path, double frame_rate) {
  CsvReader csv(path, "frame,intensity");
  IntensitySignal signal;
  signal.frame_rate = frame_rate;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    const auto frame = csv.integer(f[0]);
    if (frame != static_cast<std::int64_t>(signal.samples.size())) {
      csv.fail(fmt::format("expected frame {}, found {}", signal.samples.size(), frame));
    }
    signal.samples.push_back(csv.real(f[1]));
  }
  return signal;
}

std::vector<int> read_marker_counts(const fs::path& path) {
  CsvReader csv(path, "frame,count");
  std::vector<int> counts;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    const auto frame = csv.integer(f[0]);
    if (frame != static_cast<std::int64_t>(counts.size())) {
      csv.fail(fmt::format("expected frame {}, found {}", counts.size(), frame));
    }
    counts.push_back(static_cast<int>(csv.integer(f[1])));
  }
  return counts;
}

// ---------------------------------------------------------------------------

std::vector<RawObservation> calibration_clicks_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "calibration clicks must be a JSON array");
  std::vector<RawObservation> out;
  for (const auto& o : j) {
    RawObservation obs;
    obs.camera_id = json_get<std::string>(o, "camera_id");
    obs.video_frame = json_get<std::int64_t>(o, "video_frame");
    if (!o.contains("clicks") || !o.at("clicks").is_array()) throw Error(ErrorCode::ParseError, "missing clicks");
    std::set<std::string> seen;
    for (const auto& c : o.at("clicks")) {
      RawClick click{json_get<std::string>(c, "marker_id"), Pixel(json_get<double>(c, "u"), json_get<double>(c, "v"))};
      if (!seen.insert(click.marker_id).second) {
        throw Error(ErrorCode::ParseError, fmt::format("marker {} clicked twice in {} frame {}", click.marker_id,
                                                       obs.camera_id, obs.video_frame));
      }
      obs.clicks.push_back(std::move(click));
    }
    out.push_back(std::move(obs));
  }
  return out;
}

nlohmann::json calibration_clicks_to_json(std::span<const RawObservation> observations) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& o : observations) {
    nlohmann::json clicks = nlohmann::json::array();
    for (const auto& c : o.clicks) clicks.push_back({{"marker_id", c.marker_id}, {"u", c.pixel.x()}, {"v", c.pixel.y()}});
    arr.push_back({{"camera_id", o.camera_id}, {"video_frame", o.video_frame}, {"clicks", clicks}});
  }
  return arr;
}

std::vector<ManualAnnotation> annotations_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, "annotations must be a JSON array");
  std::vector<ManualAnnotation> out;
  std::set<std::tuple<std::string, std::string, std::int64_t, Keypoint>> seen;
  for (const auto& a : j) {
    if (!a.is_object()) throw Error(ErrorCode::ParseError, "annotation entries must be objects");
    ManualAnnotation m;
    m.individual_id = json_get<std::string>(a, "individual_id");
    m.camera_id = json_get<std::string>(a, "camera_id");
    m.video_frame = json_get<std::int64_t>(a, "video_frame");
    const auto name = json_get<std::string>(a, "keypoint");
    const auto kp = parse_keypoint(name);
    if (!kp) throw Error(ErrorCode::ParseError, fmt::format("unknown keypoint '{}'", name));
    m.keypoint = *kp;
    const bool occluded = a.contains("occluded") && json_get<bool>(a, "occluded");
    if (!occluded) {
      m.pixel = Pixel(json_get<double>(a, "u"), json_get<double>(a, "v"));
      if (!m.pixel->allFinite()) throw Error(ErrorCode::ParseError, "non-finite click");
    } else if ((a.contains("u") && !a.at("u").is_null()) || (a.contains("v") && !a.at("v").is_null())) {
      throw Error(ErrorCode::ParseError, "occluded clicks carry no pixel");
    }
    if (!seen.emplace(m.individual_id, m.camera_id, m.video_frame, m.keypoint).second) {
      throw Error(ErrorCode::ParseError, fmt::format("duplicate click for {} {} frame {} {}", m.individual_id,
                                                     m.camera_id, m.video_frame, name));
    }
    out.push_back(std::move(m));
  }
  return out;
}

nlohmann::json annotations_to_json(std::span<const ManualAnnotation> annotations) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : annotations) {
    nlohmann::json e = {{"individual_id", a.individual_id},
                        {"camera_id", a.camera_id},
                        {"video_frame", a.video_frame},
                        {"keypoint", keypoint_name(a.keypoint)},
                        {"occluded", a.occluded()}};
    if (a.pixel) {
      e["u"] = a.pixel->x();
      e["v"] = a.pixel->y();
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

nlohmann::json template_to_json(const KeypointTemplate& keypoint_template) {
  nlohmann::json kps = nlohmann::json::object();
  for (const Keypoint kp : kAllKeypoints) {
    const auto& est = keypoint_template.keypoints[index(kp)];
    if (!est) continue;
    kps[std::string(keypoint_name(kp))] = {
        {"offset", point_to_json(est->offset)},
        {"n", est->samples},
        {"spread", est->spread ? point_to_json(*est->spread) : nlohmann::json(nullptr)}};
  }
  return {{"individual_id", keypoint_template.individual_id}, {"keypoints", kps}};
}

KeypointTemplate template_from_json(const nlohmann::json& j) {
  KeypointTemplate t;
  t.individual_id = json_get<std::string>(j, "individual_id");
  if (!j.contains("keypoints") || !j.at("keypoints").is_object()) {
    throw Error(ErrorCode::ParseError, "template needs a keypoints object");
  }
  for (const auto& [name, value] : j.at("keypoints").items()) {
    const auto kp = parse_keypoint(name);
    if (!kp) throw Error(ErrorCode::ParseError, fmt::format("unknown keypoint '{}'", name));
    KeypointEstimate est;
    est.offset = point_from_json(value.at("offset"));
    est.samples = json_get<int>(value, "n");
    if (value.contains("spread") && !value.at("spread").is_null()) est.spread = point_from_json(value.at("spread"));
    t.keypoints[index(*kp)] = est;
  }
  return t;
}

// ---------------------------------------------------------------------------

AnnotationFiles format_annotations(std::span<const AnnotatedFrame> frames) {
  AnnotationFiles files;
  files.keypoints_3d = "frame,individual,keypoint,x,y,z,valid\n";
  files.boxes = "frame,individual,camera,x_min,y_min,x_max,y_max\n";
  auto& per_camera = files.per_camera_2d;
  for (const auto& frame : frames) {
    for (const auto& ind : frame.individuals) {
      for (const Keypoint kp : kAllKeypoints) {
        if (ind.valid) {
          const auto& p = ind.world[index(kp)];
          files.keypoints_3d += fmt::format("{},{},{},{},{},{},1\n", frame.video_frame, ind.individual_id,
                                            keypoint_name(kp), p.x(), p.y(), p.z());
        } else {
          files.keypoints_3d +=
              fmt::format("{},{},{},,,,0\n", frame.video_frame, ind.individual_id, keypoint_name(kp));
        }
      }
      for (const auto& view : ind.views) {
        auto& text = per_camera[view.camera_id];
        if (text.empty()) text = "frame,individual,keypoint,u,v,visible\n";
        for (const Keypoint kp : kAllKeypoints) {
          const auto& proj = view.keypoints[index(kp)];
          text += fmt::format("{},{},{},{},{},{}\n", frame.video_frame, ind.individual_id, keypoint_name(kp),
                              proj.pixel.x(), proj.pixel.y(), proj.visible ? 1 : 0);
        }
        if (view.box) {
          files.boxes += fmt::format("{},{},{},{},{},{},{}\n", frame.video_frame, ind.individual_id, view.camera_id,
                                     view.box->x_min, view.box->y_min, view.box->x_max, view.box->y_max);
        }
      }
    }
  }
  return files;
}

std::vector<KeyedPixel> read_keypoints_2d(const fs::path& path, const std::string& camera_id) {
  CsvReader csv(path, "frame,individual,keypoint,u,v,visible");
  std::vector<KeyedPixel> out;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    if (!csv.flag(f[5])) continue;
    out.push_back({{csv.integer(f[0]), std::string(f[1]), camera_id}, csv.keypoint(f[2]),
                   Pixel(csv.real(f[3]), csv.real(f[4]))});
  }
  return out;
}

std::vector<KeyedPoint3> read_keypoints_3d(const fs::path& path) {
  CsvReader csv(path, "frame,individual,keypoint,x,y,z,valid");
  std::vector<KeyedPoint3> out;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    if (!csv.flag(f[6])) continue;
    out.push_back({{csv.integer(f[0]), std::string(f[1]), ""}, csv.keypoint(f[2]),
                   Point3(csv.real(f[3]), csv.real(f[4]), csv.real(f[5]))});
  }
  return out;
}

std::map<FrameKey, BoundingBox> read_boxes(const fs::path& path) {
  CsvReader csv(path, "frame,individual,camera,x_min,y_min,x_max,y_max");
  std::map<FrameKey, BoundingBox> out;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    out[{csv.integer(f[0]), std::string(f[1]), std::string(f[2])}] =
        BoundingBox{csv.real(f[3]), csv.real(f[4]), csv.real(f[5]), csv.real(f[6])};
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  CsvReader csv(path, "frame,individual,camera,keypoint,u,v,confidence");
  std::vector<PredictionRecord> out;
  std::vector<std::string_view> f;
  while (csv.next(f)) {
    PredictionRecord p;
    p.video_frame = csv.integer(f[0]);
    p.individual = std::string(f[1]);
    p.camera = std::string(f[2]);
    p.keypoint = csv.keypoint(f[3]);
    p.pixel = Pixel(csv.real(f[4]), csv.real(f[5]));
    p.confidence = csv.real(f[6]);
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) csv.fail("confidence must lie in [0, 1]");
    out.push_back(std::move(p));
  }
  return out;
}

std::string format_predictions(std::span<const PredictionRecord> predictions) {
  std::string out = "frame,individual,camera,keypoint,u,v,confidence\n";
  for (const auto& p : predictions) {
    out += fmt::format("{},{},{},{},{},{},{}\n", p.video_frame, p.individual, p.camera, keypoint_name(p.keypoint),
                       p.pixel.x(), p.pixel.y(), p.confidence);
  }
  return out;
}

}  // namespace keyprop::io
