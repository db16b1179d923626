#include "keyprop/annotation.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>
#include <tuple>

namespace keyprop {

namespace {

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double upper = v[mid];
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

const Camera* find_camera(std::span<const Camera> cameras, const std::string& id) {
  for (const auto& c : cameras) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

std::optional<RigidTransform> valid_pose(const BodyTrack* track, std::int64_t frame) {
  if (track == nullptr) return std::nullopt;
  const auto* p = track->at(frame);
  if (p == nullptr || !p->valid) return std::nullopt;
  return p->pose;
}

}  // namespace

bool KeypointTemplate::usable() const {
  return std::all_of(keypoints.begin(), keypoints.end(), [](const auto& k) { return k && k->samples >= 1; });
}

TemplateEstimate estimate_template(std::span<const ManualAnnotation> annotations, std::span<const Camera> cameras,
                                   const BodyTrack& head, const BodyTrack& backpack, const ClockMap& clock,
                                   const TemplateOptions& options) {
  const std::string& individual = head.individual_id;
  TemplateEstimate out;
  out.keypoint_template.individual_id = individual;

  // (keypoint, frame) -> observations
  std::map<std::pair<std::size_t, std::int64_t>, std::vector<ViewObservation>> grouped;
  for (const auto& a : annotations) {
    if (a.individual_id != individual || a.occluded()) continue;
    const Camera* cam = find_camera(cameras, a.camera_id);
    if (cam == nullptr) {
      out.warnings.push_back(fmt::format("annotation references unknown camera '{}'", a.camera_id));
      continue;
    }
    grouped[{index(a.keypoint), a.video_frame}].push_back({cam->model, *a.pixel});
  }

  for (const Keypoint kp : kAllKeypoints) {
    const BodyTrack& track = keypoint_part(kp) == BodyPart::Head ? head : backpack;
    std::vector<Point3> samples;
    int multi_view_frames = 0;
    int invalid_pose_frames = 0;
    for (auto it = grouped.lower_bound({index(kp), std::numeric_limits<std::int64_t>::min()});
         it != grouped.end() && it->first.first == index(kp); ++it) {
      const auto& views = it->second;
      if (views.size() < 2) continue;
      ++multi_view_frames;
      const std::int64_t video_frame = it->first.second;
      const auto pose = valid_pose(&track, clock.map_frame(video_frame));
      if (!pose) {
        ++invalid_pose_frames;
        out.warnings.push_back(fmt::format("{} {}: no valid {} pose at video frame {}, skipped", individual,
                                           keypoint_name(kp), part_name(keypoint_part(kp)), video_frame));
        continue;
      }
      try {
        const auto tri = triangulate(views, options.triangulation);
        samples.push_back(pose->inverse().apply(tri.point));
      } catch (const Error& e) {
        out.warnings.push_back(
            fmt::format("{} {}: frame {} skipped ({})", individual, keypoint_name(kp), video_frame, e.what()));
      }
    }

    if (multi_view_frames == 0) {
      throw Error(ErrorCode::InsufficientViews, fmt::format("{} {}: never annotated in two views of the same frame",
                                                            individual, keypoint_name(kp)));
    }
    if (samples.empty()) {
      if (invalid_pose_frames == multi_view_frames) {
        throw Error(ErrorCode::InvalidPose,
                    fmt::format("{} {}: no annotated frame has a valid pose", individual, keypoint_name(kp)));
      }
      throw Error(ErrorCode::InsufficientViews,
                  fmt::format("{} {}: no annotated frame could be triangulated", individual, keypoint_name(kp)));
    }

    if (samples.size() >= 3) {
      Point3 med;
      for (int axis = 0; axis < 3; ++axis) {
        std::vector<double> values;
        for (const auto& s : samples) values.push_back(s(axis));
        med(axis) = median(values);
      }
      std::vector<double> dist;
      for (const auto& s : samples) dist.push_back((s - med).norm());
      const double mad = median(dist);
      std::vector<Point3> kept;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (dist[i] > options.mad_gate * mad && dist[i] > 1e-9) {
          out.warnings.push_back(fmt::format("{} {}: dropped sample {:.2f} mm from the median", individual,
                                             keypoint_name(kp), dist[i]));
          continue;
        }
        kept.push_back(samples[i]);
      }
      samples = std::move(kept);
    }

    KeypointEstimate est;
    est.samples = static_cast<int>(samples.size());
    for (const auto& s : samples) est.offset += s;
    est.offset /= static_cast<double>(samples.size());
    if (samples.size() >= 2) {
      Eigen::Vector3d var = Eigen::Vector3d::Zero();
      for (const auto& s : samples) var += (s - est.offset).cwiseAbs2();
      est.spread = (var / static_cast<double>(samples.size() - 1)).cwiseSqrt();
      if (est.spread->maxCoeff() > options.high_spread_mm) {
        out.warnings.push_back(fmt::format("HighSpread: {} {} spread ({:.2f}, {:.2f}, {:.2f}) mm", individual,
                                           keypoint_name(kp), (*est.spread)(0), (*est.spread)(1), (*est.spread)(2)));
      }
    }
    out.keypoint_template.keypoints[index(kp)] = est;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<BoundingBox> bounding_box(std::span<const Pixel> visible, int width, int height, double margin_px) {
  if (visible.empty()) return std::nullopt;
  double x_min = visible.front().x();
  double x_max = x_min;
  double y_min = visible.front().y();
  double y_max = y_min;
  for (const auto& p : visible) {
    x_min = std::min(x_min, p.x());
    x_max = std::max(x_max, p.x());
    y_min = std::min(y_min, p.y());
    y_max = std::max(y_max, p.y());
  }
  BoundingBox box;
  box.x_min = std::clamp(x_min - margin_px, 0.0, static_cast<double>(width));
  box.y_min = std::clamp(y_min - margin_px, 0.0, static_cast<double>(height));
  box.x_max = std::clamp(x_max + margin_px, 0.0, static_cast<double>(width));
  box.y_max = std::clamp(y_max + margin_px, 0.0, static_cast<double>(height));
  return box;
}

IndividualAnnotation propagate_frame(const KeypointTemplate& keypoint_template,
                                     const std::optional<RigidTransform>& head_pose,
                                     const std::optional<RigidTransform>& backpack_pose,
                                     std::span<const Camera> cameras, double bbox_margin_px) {
  IndividualAnnotation out;
  out.individual_id = keypoint_template.individual_id;
  if (!head_pose || !backpack_pose || !keypoint_template.usable()) return out;
  out.valid = true;
  for (const Keypoint kp : kAllKeypoints) {
    const auto& pose = keypoint_part(kp) == BodyPart::Head ? *head_pose : *backpack_pose;
    out.world[index(kp)] = pose.apply(keypoint_template.keypoints[index(kp)]->offset);
  }
  out.views.reserve(cameras.size());
  std::vector<Pixel> visible;
  visible.reserve(kKeypointCount);
  for (const auto& cam : cameras) {
    ViewAnnotation view;
    view.camera_id = cam.id;
    visible.clear();
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      view.keypoints[k] = project(cam.model, out.world[k]);
      if (view.keypoints[k].visible) visible.push_back(view.keypoints[k].pixel);
    }
    view.box = bounding_box(visible, cam.model.intrinsics().width, cam.model.intrinsics().height, bbox_margin_px);
    out.views.push_back(std::move(view));
  }
  return out;
}

double overlap_fraction(const BoundingBox& box, const BoundingBox& other) {
  const double w = std::min(box.x_max, other.x_max) - std::max(box.x_min, other.x_min);
  const double h = std::min(box.y_max, other.y_max) - std::max(box.y_min, other.y_min);
  if (w <= 0.0 || h <= 0.0 || box.area() <= 0.0) return 0.0;
  return w * h / box.area();
}

std::vector<std::vector<bool>> filter_training_crops(const AnnotatedFrame& frame, double max_overlap) {
  std::size_t views = 0;
  for (const auto& ind : frame.individuals) views = std::max(views, ind.views.size());
  std::vector<std::vector<bool>> include(frame.individuals.size(), std::vector<bool>(views, false));
  for (std::size_t i = 0; i < frame.individuals.size(); ++i) {
    const auto& mine = frame.individuals[i];
    for (std::size_t v = 0; v < mine.views.size(); ++v) {
      if (!mine.views[v].box) continue;
      bool keep = true;
      for (std::size_t j = 0; j < frame.individuals.size() && keep; ++j) {
        if (j == i || v >= frame.individuals[j].views.size()) continue;
        const auto& other = frame.individuals[j].views[v].box;
        if (other && overlap_fraction(*mine.views[v].box, *other) > max_overlap) keep = false;
      }
      include[i][v] = keep;
    }
  }
  return include;
}

std::vector<AnnotatedFrame> propagate_sequence(std::span<const KeypointTemplate> templates,
                                               std::span<const BodyTrack> tracks, std::span<const Camera> cameras,
                                               const ClockMap& clock, std::int64_t first_video_frame,
                                               std::int64_t frame_count, const PropagationOptions& options) {
  struct Parts {
    const KeypointTemplate* keypoint_template = nullptr;
    const BodyTrack* head = nullptr;
    const BodyTrack* backpack = nullptr;
  };
  std::vector<Parts> individuals;
  for (const auto& t : templates) {
    if (!t.usable()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("template for {} is missing keypoints", t.individual_id));
    }
    Parts parts;
    parts.keypoint_template = &t;
    for (const auto& track : tracks) {
      if (track.individual_id != t.individual_id) continue;
      (track.part == BodyPart::Head ? parts.head : parts.backpack) = &track;
    }
    individuals.push_back(parts);
  }

  std::vector<AnnotatedFrame> frames(static_cast<std::size_t>(std::max<std::int64_t>(frame_count, 0)));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto& f = frames[i];
      f.video_frame = first_video_frame + static_cast<std::int64_t>(i);
      f.mocap_frame = clock.map_frame(f.video_frame);
      f.individuals.reserve(individuals.size());
      for (const auto& ind : individuals) {
        f.individuals.push_back(propagate_frame(*ind.keypoint_template, valid_pose(ind.head, f.mocap_frame),
                                                valid_pose(ind.backpack, f.mocap_frame), cameras,
                                                options.bbox_margin_px));
      }
    }
  };

  unsigned threads = options.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(frames.size() / 64, 1)));
  if (threads <= 1) {
    work(0, frames.size());
    return frames;
  }
  std::vector<std::jthread> workers;
  const std::size_t chunk = (frames.size() + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(frames.size(), begin + chunk);
    if (begin >= end) break;
    workers.emplace_back(work, begin, end);
  }
  for (auto& w : workers) w.join();
  return frames;
}

}  // namespace keyprop
