#include "keyprop/service.hpp"

#include "keyprop/error.hpp"
#include "keyprop/io.hpp"
#include "keyprop/manifest.hpp"
#include "keyprop/pipeline.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>

namespace keyprop {

namespace {

// One persisted document. Readers share `rw`; a writer must win `writer`
// without waiting, then takes `rw` exclusively for the rename.
struct Resource {
  std::shared_mutex rw;
  std::mutex writer;
};

struct Sequence {
  fs::path manifest_path;
  Resource manifest;
  Resource annotations;
  Resource clicks;
  Resource templates;

  std::mutex cache_mutex;
  std::optional<std::vector<MarkerFrame>> markers;
  std::optional<std::vector<BodyTrack>> tracks;
};

std::string etag_of(std::string_view content) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const unsigned char c : content) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fmt::format("\"{:016x}\"", h);
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  const nlohmann::json body = {{"error", {{"code", code}, {"message", message}}}};
  res.set_content(body.dump(), "application/json");
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile:
      return 404;
    case ErrorCode::InvalidManifest:
      return 500;
    default:
      return 422;
  }
}

std::string read_or(const fs::path& path, std::string fallback) {
  return fs::exists(path) ? io::read_text(path) : fallback;
}

}  // namespace

struct Service::Impl {
  httplib::Server server;
  std::map<std::string, std::unique_ptr<Sequence>> sequences;

  explicit Impl(const std::vector<fs::path>& manifests) {
    for (const auto& path : manifests) {
      const auto m = load_manifest(path);
      auto seq = std::make_unique<Sequence>();
      seq->manifest_path = m.source;
      if (!sequences.emplace(m.sequence_id, std::move(seq)).second) {
        throw Error(ErrorCode::InvalidManifest, fmt::format("sequence '{}' listed twice", m.sequence_id));
      }
    }
    routes();
  }

  Sequence* find(const std::string& id, httplib::Response& res) {
    const auto it = sequences.find(id);
    if (it == sequences.end()) {
      send_error(res, 404, "service.UnknownSequence", fmt::format("no sequence '{}'", id));
      return nullptr;
    }
    return it->second.get();
  }

  static const CameraEntry* camera_entry(const SequenceManifest& m, const std::string& id, httplib::Response& res) {
    for (const auto& c : m.cameras) {
      if (c.id == id) return &c;
    }
    send_error(res, 404, "service.UnknownCamera", fmt::format("no camera '{}'", id));
    return nullptr;
  }

  SequenceManifest manifest_of(Sequence& seq) {
    std::shared_lock lock(seq.manifest.rw);
    return load_manifest(seq.manifest_path);
  }

  // Where a document lives; documents a manifest does not name yet get a
  // default file next to it, recorded in the manifest on first write.
  static fs::path document_path(const SequenceManifest& m, bool annotations) {
    const fs::path& named = annotations ? m.annotations : m.calibration_clicks;
    if (!named.empty()) return named;
    return m.source.parent_path() / (annotations ? "annotations.json" : "calibration_clicks.json");
  }

  void get_document(Sequence& seq, bool annotations, httplib::Response& res) {
    const auto m = manifest_of(seq);
    auto& resource = annotations ? seq.annotations : seq.clicks;
    std::shared_lock lock(resource.rw);
    const auto text = read_or(document_path(m, annotations), "[]");
    res.set_header("ETag", etag_of(text));
    res.set_content(text, "application/json");
  }

  void put_document(Sequence& seq, bool annotations, const httplib::Request& req, httplib::Response& res) {
    auto m = manifest_of(seq);
    try {
      const auto doc = nlohmann::json::parse(req.body);
      std::set<std::string> cameras;
      for (const auto& c : m.cameras) cameras.insert(c.id);
      const std::set<std::string> individuals(m.individuals.begin(), m.individuals.end());
      if (annotations) {
        for (const auto& a : io::annotations_from_json(doc)) {
          if (!cameras.contains(a.camera_id)) {
            throw Error(ErrorCode::ParseError, fmt::format("unknown camera '{}'", a.camera_id));
          }
          if (!individuals.empty() && !individuals.contains(a.individual_id)) {
            throw Error(ErrorCode::ParseError, fmt::format("unknown individual '{}'", a.individual_id));
          }
        }
      } else {
        for (const auto& o : io::calibration_clicks_from_json(doc)) {
          if (!cameras.contains(o.camera_id)) {
            throw Error(ErrorCode::ParseError, fmt::format("unknown camera '{}'", o.camera_id));
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 422, "io.ParseError", e.what());
    } catch (const Error& e) {
      return send_error(res, 422, code_name(e.code()), e.what());
    }

    auto& resource = annotations ? seq.annotations : seq.clicks;
    std::unique_lock writer(resource.writer, std::try_to_lock);
    if (!writer.owns_lock()) {
      return send_error(res, 409, "service.WriteConflict", "another write to this resource is in progress");
    }
    const auto path = document_path(m, annotations);
    if (req.has_header("If-Match")) {
      std::shared_lock read(resource.rw);
      const auto current = etag_of(read_or(path, "[]"));
      if (req.get_header_value("If-Match") != current) {
        return send_error(res, 409, "service.StaleWrite", "resource changed since it was read");
      }
    }
    {
      std::unique_lock exclusive(resource.rw);
      io::write_text_atomic(path, req.body);
    }
    const bool named = annotations ? !m.annotations.empty() : !m.calibration_clicks.empty();
    if (!named) {
      std::unique_lock manifest_lock(seq.manifest.rw);
      auto fresh = load_manifest(seq.manifest_path);
      (annotations ? fresh.annotations : fresh.calibration_clicks) = path;
      save_manifest(fresh);
    }
    const auto tag = etag_of(req.body);
    res.set_header("ETag", tag);
    res.set_content(nlohmann::json({{"etag", tag}, {"bytes", req.body.size()}}).dump(), "application/json");
  }

  void build_template(Sequence& seq, const httplib::Request& req, httplib::Response& res) {
    std::vector<std::string> individuals;
    if (!req.body.empty()) {
      try {
        const auto body = nlohmann::json::parse(req.body);
        if (body.contains("individuals")) individuals = body.at("individuals").get<std::vector<std::string>>();
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 422, "io.ParseError", e.what());
      }
    }
    std::unique_lock writer(seq.templates.writer, std::try_to_lock);
    if (!writer.owns_lock()) return send_error(res, 409, "service.WriteConflict", "a template build is running");
    const auto m = manifest_of(seq);
    std::shared_lock read_clicks(seq.annotations.rw);
    std::unique_lock exclusive(seq.templates.rw);
    const auto build = pipeline::build_templates(m, individuals);
    res.set_content(build.report.json.dump(2) + "\n", "application/json");
  }

  void serve_frame(Sequence& seq, const std::string& camera, std::int64_t n, httplib::Response& res) {
    const auto m = manifest_of(seq);
    const auto* found = camera_entry(m, camera, res);
    if (!found) return;
    const auto& entry = *found;
    if (entry.frames.empty()) return send_error(res, 404, "service.NoFrames", "camera has no frame directory");
    for (const auto& [ext, type] : {std::pair{".png", "image/png"}, std::pair{".jpg", "image/jpeg"}}) {
      const auto path = entry.frames / fmt::format("frame_{:06d}{}", n, ext);
      if (fs::exists(path)) return res.set_content(io::read_text(path), type);
    }
    send_error(res, 404, "service.NoFrame", fmt::format("frame {} of camera '{}' not found", n, camera));
  }

  std::optional<BoundingBox> crop_box(Sequence& seq, const SequenceManifest& m, const Camera& camera,
                                      const std::string& individual, std::int64_t n) {
    const auto mocap_frame = m.clock(camera.id).map_frame(n);
    const auto& k = camera.model.intrinsics();
    if (fs::exists(m.template_path(individual))) {
      const auto t = io::template_from_json(nlohmann::json::parse(io::read_text(m.template_path(individual))));
      std::vector<BodyTrack> tracks;
      {
        std::lock_guard lock(seq.cache_mutex);
        if (!seq.tracks) seq.tracks = pipeline::load_tracks(m);
        tracks = *seq.tracks;
      }
      std::optional<RigidTransform> head;
      std::optional<RigidTransform> backpack;
      for (const auto& tr : tracks) {
        if (tr.individual_id != individual) continue;
        const auto* p = tr.at(mocap_frame);
        if (p && p->valid) (tr.part == BodyPart::Head ? head : backpack) = p->pose;
      }
      if (t.usable()) {
        const auto ann = propagate_frame(t, head, backpack, std::span<const Camera>(&camera, 1));
        if (ann.valid && !ann.views.empty()) return ann.views.front().box;
        return std::nullopt;
      }
    }
    // No template yet: frame the individual's markers.
    std::vector<Pixel> pixels;
    {
      std::lock_guard lock(seq.cache_mutex);
      if (!seq.markers) seq.markers = io::read_markers(m.markers);
      const auto defs = io::bodies_from_json(nlohmann::json::parse(io::read_text(m.bodies)));
      for (const auto& frame : *seq.markers) {
        if (frame.frame_index != mocap_frame) continue;
        for (const auto& def : defs) {
          if (def.individual_id != individual) continue;
          for (const auto& id : def.marker_ids) {
            const auto* obs = frame.find(id);
            if (!obs || !obs->position) continue;
            const auto proj = project(camera.model, *obs->position);
            if (proj.visible) pixels.push_back(proj.pixel);
          }
        }
      }
    }
    return bounding_box(pixels, k.width, k.height);
  }

  void serve_crop(Sequence& seq, const std::string& individual, const std::string& camera_id, std::int64_t n,
                  httplib::Response& res) {
    const auto m = manifest_of(seq);
    const auto* found = camera_entry(m, camera_id, res);
    if (!found) return;
    const auto& entry = *found;
    const auto camera = io::read_camera(entry.calibration);
    const auto box = crop_box(seq, m, camera, individual, n);
    if (!box || box->area() <= 0.0) {
      return send_error(res, 404, "service.NoPose", fmt::format("'{}' is not located in frame {}", individual, n));
    }
    cv::Mat image;
    for (const auto* ext : {".png", ".jpg"}) {
      const auto path = entry.frames / fmt::format("frame_{:06d}{}", n, ext);
      if (!entry.frames.empty() && fs::exists(path)) {
        image = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
        break;
      }
    }
    if (image.empty()) return send_error(res, 404, "service.NoFrame", fmt::format("frame {} not found", n));
    const int x0 = std::clamp(static_cast<int>(std::floor(box->x_min)), 0, image.cols);
    const int y0 = std::clamp(static_cast<int>(std::floor(box->y_min)), 0, image.rows);
    const int x1 = std::clamp(static_cast<int>(std::ceil(box->x_max)), 0, image.cols);
    const int y1 = std::clamp(static_cast<int>(std::ceil(box->y_max)), 0, image.rows);
    if (x1 <= x0 || y1 <= y0) return send_error(res, 404, "service.NoPose", "crop lies outside the image");
    std::vector<unsigned char> png;
    cv::imencode(".png", image(cv::Rect(x0, y0, x1 - x0, y1 - y0)), png);
    res.set_header("X-Crop-Box", fmt::format("{},{},{},{}", x0, y0, x1, y1));
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  // Runs a handler, turning library errors into JSON responses.
  template <typename F>
  httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), code_name(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "service.Internal", e.what());
      }
    };
  }

  void routes() {
    server.Get("/sequences", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (auto& [id, seq] : sequences) {
        const auto m = manifest_of(*seq);
        nlohmann::json cams = nlohmann::json::array();
        for (const auto& c : m.cameras) cams.push_back(c.id);
        out.push_back(
            {{"id", id}, {"cameras", cams}, {"individuals", m.individuals}, {"video_frames", m.video_frames}});
      }
      res.set_content(out.dump(), "application/json");
    }));
    server.Get(R"(/sequences/([^/]+)/frames/([^/]+)/(\d+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 if (auto* seq = find(req.matches[1], res)) {
                   serve_frame(*seq, req.matches[2], std::stoll(req.matches[3]), res);
                 }
               }));
    server.Get(R"(/sequences/([^/]+)/crops/([^/]+)/([^/]+)/(\d+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 if (auto* seq = find(req.matches[1], res)) {
                   serve_crop(*seq, req.matches[2], req.matches[3], std::stoll(req.matches[4]), res);
                 }
               }));
    for (const bool annotations : {true, false}) {
      const std::string pattern = annotations ? R"(/annotations/([^/]+))" : R"(/calibration-clicks/([^/]+))";
      server.Get(pattern, guarded([this, annotations](const httplib::Request& req, httplib::Response& res) {
        if (auto* seq = find(req.matches[1], res)) get_document(*seq, annotations, res);
      }));
      server.Put(pattern, guarded([this, annotations](const httplib::Request& req, httplib::Response& res) {
        if (auto* seq = find(req.matches[1], res)) put_document(*seq, annotations, req, res);
      }));
    }
    server.Post(R"(/template/([^/]+)/build)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (auto* seq = find(req.matches[1], res)) build_template(*seq, req, res);
    }));
  }
};

Service::Service(const std::vector<fs::path>& manifests) : impl_(std::make_unique<Impl>(manifests)) {}
Service::~Service() { stop(); }

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int Service::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }
void Service::stop() {
  if (impl_) impl_->server.stop();
}
void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace keyprop
