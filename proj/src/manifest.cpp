#include "keyprop/manifest.hpp"

#include "keyprop/error.hpp"
#include "keyprop/io.hpp"
#include "keyprop/toml_lite.hpp"

#include <fmt/format.h>

#include <set>

namespace keyprop {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidManifest, what); }

template <typename T>
T field(const nlohmann::json& table, const char* key, const std::string& where) {
  if (!table.contains(key)) invalid(fmt::format("{}: missing '{}'", where, key));
  try {
    return table.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid(fmt::format("{}: '{}' has the wrong type", where, key));
  }
}

template <typename T>
T field_or(const nlohmann::json& table, const char* key, T fallback, const std::string& where) {
  return table.contains(key) ? field<T>(table, key, where) : fallback;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  const fs::path p(value);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string relative_to(const fs::path& base, const fs::path& p) {
  if (p.empty()) return {};
  const auto rel = p.lexically_relative(base);
  return rel.empty() ? p.string() : rel.generic_string();
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) {
    throw Error(ErrorCode::MissingFile, fmt::format("{} not found: {}", what, p.string()));
  }
}

}  // namespace

const CameraEntry& SequenceManifest::camera(const std::string& id) const {
  for (const auto& c : cameras) {
    if (c.id == id) return c;
  }
  invalid(fmt::format("unknown camera '{}'", id));
}

const ClockMap& SequenceManifest::clock(const std::string& camera_id) const {
  if (cameras.empty()) invalid("manifest has no cameras");
  const auto& entry = camera_id.empty() ? cameras.front() : camera(camera_id);
  if (!entry.clock) invalid(fmt::format("camera '{}' has no clock map; run sync first", entry.id));
  return *entry.clock;
}

fs::path SequenceManifest::template_path(const std::string& individual_id) const {
  return templates / fmt::format("{}.json", individual_id);
}

SequenceManifest load_manifest(const fs::path& path) {
  const auto doc = toml_lite::parse(io::read_text(path));
  const fs::path base = fs::absolute(path).parent_path();
  const std::string top = path.filename().string();

  SequenceManifest m;
  m.source = fs::absolute(path);
  m.sequence_id = field<std::string>(doc, "sequence_id", top);
  m.mocap_rate = field_or<double>(doc, "mocap_rate", 100.0, top);
  m.video_rate = field_or<double>(doc, "video_rate", 30.0, top);
  m.video_frames = field_or<std::int64_t>(doc, "video_frames", 0, top);
  m.seed = field_or<std::uint64_t>(doc, "seed", 0, top);
  m.individuals = field_or<std::vector<std::string>>(doc, "individuals", {}, top);
  if (!(m.mocap_rate > 0.0) || !(m.video_rate > 0.0)) invalid("frame rates must be positive");
  if (m.video_frames < 0) invalid("video_frames must be non-negative");
  if (std::set<std::string>(m.individuals.begin(), m.individuals.end()).size() != m.individuals.size()) {
    invalid("duplicate individual id");
  }

  auto path_field = [&](const char* key) { return resolve(base, field_or<std::string>(doc, key, "", top)); };
  m.markers = path_field("markers");
  m.bodies = path_field("bodies");
  m.sync_counts = path_field("sync_counts");
  m.annotations = path_field("annotations");
  m.calibration_clicks = path_field("calibration_clicks");
  m.predictions = path_field("predictions");
  m.tracks = path_field("tracks");
  m.templates = path_field("templates");
  if (m.markers.empty()) invalid("missing 'markers'");
  if (m.bodies.empty()) invalid("missing 'bodies'");
  require_file(m.markers, "marker file");
  require_file(m.bodies, "body definition file");
  for (const auto* p : {&m.sync_counts, &m.annotations, &m.calibration_clicks, &m.predictions}) {
    if (!p->empty()) require_file(*p, "input file");
  }
  if (m.tracks.empty()) m.tracks = base / "tracks.csv";
  if (m.templates.empty()) m.templates = base / "templates";

  if (!doc.contains("cameras") || !doc.at("cameras").is_array() || doc.at("cameras").empty()) {
    invalid("manifest needs at least one [[cameras]] entry");
  }
  std::set<std::string> ids;
  for (const auto& c : doc.at("cameras")) {
    CameraEntry e;
    e.id = field<std::string>(c, "id", "[[cameras]]");
    const std::string where = fmt::format("camera '{}'", e.id);
    if (!ids.insert(e.id).second) invalid(fmt::format("duplicate camera id '{}'", e.id));
    e.calibration = resolve(base, field<std::string>(c, "calibration", where));
    require_file(e.calibration, where + " calibration");
    e.frames = resolve(base, field_or<std::string>(c, "frames", "", where));
    if (!e.frames.empty() && !fs::is_directory(e.frames)) {
      throw Error(ErrorCode::MissingFile, fmt::format("{} frame directory not found: {}", where, e.frames.string()));
    }
    e.intensity = resolve(base, field_or<std::string>(c, "intensity", "", where));
    if (!e.intensity.empty()) require_file(e.intensity, where + " intensity trace");
    if (c.contains("clock_offset") || c.contains("clock_rate")) {
      ClockMap clock;
      clock.offset = field<double>(c, "clock_offset", where);
      clock.rate_ratio = field<double>(c, "clock_rate", where);
      clock.residual_rms = field_or<double>(c, "clock_residual", 0.0, where);
      clock.matched = field_or<std::size_t>(c, "clock_matched", 0, where);
      if (!(clock.rate_ratio > 0.0)) invalid(fmt::format("{}: clock_rate must be positive", where));
      e.clock = clock;
    }
    m.cameras.push_back(std::move(e));
  }
  return m;
}

std::string format_manifest(const SequenceManifest& m) {
  const fs::path base = m.source.parent_path();
  nlohmann::json doc = nlohmann::json::object();
  doc["sequence_id"] = m.sequence_id;
  doc["mocap_rate"] = m.mocap_rate;
  doc["video_rate"] = m.video_rate;
  doc["video_frames"] = m.video_frames;
  doc["seed"] = m.seed;
  doc["individuals"] = m.individuals;
  auto put = [&](const char* key, const fs::path& p) {
    if (!p.empty()) doc[key] = relative_to(base, p);
  };
  put("markers", m.markers);
  put("bodies", m.bodies);
  put("sync_counts", m.sync_counts);
  put("annotations", m.annotations);
  put("calibration_clicks", m.calibration_clicks);
  put("predictions", m.predictions);
  put("tracks", m.tracks);
  put("templates", m.templates);
  nlohmann::json cams = nlohmann::json::array();
  for (const auto& c : m.cameras) {
    nlohmann::json e = {{"id", c.id}, {"calibration", relative_to(base, c.calibration)}};
    if (!c.frames.empty()) e["frames"] = relative_to(base, c.frames);
    if (!c.intensity.empty()) e["intensity"] = relative_to(base, c.intensity);
    if (c.clock) {
      e["clock_offset"] = c.clock->offset;
      e["clock_rate"] = c.clock->rate_ratio;
      e["clock_residual"] = c.clock->residual_rms;
      e["clock_matched"] = c.clock->matched;
    }
    cams.push_back(std::move(e));
  }
  doc["cameras"] = std::move(cams);
  return toml_lite::dump(doc);
}

void save_manifest(const SequenceManifest& manifest) {
  io::write_text_atomic(manifest.source, format_manifest(manifest));
}

std::vector<Camera> load_cameras(const SequenceManifest& manifest) {
  std::vector<Camera> cameras;
  for (const auto& entry : manifest.cameras) {
    auto cam = io::read_camera(entry.calibration);
    if (cam.id != entry.id) {
      invalid(fmt::format("calibration file {} describes camera '{}', expected '{}'", entry.calibration.string(),
                          cam.id, entry.id));
    }
    cameras.push_back(std::move(cam));
  }
  return cameras;
}

}  // namespace keyprop
