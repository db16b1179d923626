#include "keyprop/hybrid.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <tuple>

namespace keyprop {

GappedTrack introduce_gaps(const KeypointTrack& track, const GapSpec& spec) {
  if (!(spec.fraction >= 0.0 && spec.fraction < 1.0)) {
    throw Error(ErrorCode::InfeasibleSpec, "gap fraction must lie in [0, 1)");
  }
  if (spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw Error(ErrorCode::InfeasibleSpec, "gap lengths must satisfy 1 <= min <= max");
  }
  GappedTrack out{track, {}};
  const std::size_t n = track.size();
  const auto target = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(n)));
  if (target == 0) return out;
  if (n <= static_cast<std::size_t>(spec.max_length) + 2) {
    throw Error(ErrorCode::InfeasibleSpec, fmt::format("track of {} frames is too short for {}-frame gaps", n,
                                                       spec.max_length));
  }
  // Every gap needs one kept frame after it, plus the two kept end frames.
  const std::size_t min_gaps = (target + spec.max_length - 1) / spec.max_length;
  if (target + min_gaps + 1 > n) {
    throw Error(ErrorCode::InfeasibleSpec, fmt::format("cannot remove {} of {} frames in separated gaps", target, n));
  }

  std::mt19937_64 rng(spec.seed);
  std::size_t removed = 0;
  std::vector<Gap> gaps;
  while (removed < target) {
    const std::size_t remaining = target - removed;
    if (remaining < static_cast<std::size_t>(spec.min_length)) break;
    std::uniform_int_distribution<int> length_dist(spec.min_length, spec.max_length);
    auto length = static_cast<std::size_t>(length_dist(rng));
    if (length > remaining && remaining >= static_cast<std::size_t>(spec.min_length)) length = remaining;

    bool placed = false;
    std::uniform_int_distribution<std::size_t> start_dist(1, n - 1 - length);
    for (int attempt = 0; attempt < 100000 && !placed; ++attempt) {
      const Gap candidate{start_dist(rng), 0};
      const Gap gap{candidate.begin, candidate.begin + length};
      // Keep at least one frame between gaps.
      const bool clash = std::any_of(gaps.begin(), gaps.end(), [&](const Gap& g) {
        return gap.begin <= g.end && g.begin <= gap.end;
      });
      if (clash) continue;
      gaps.push_back(gap);
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::InfeasibleSpec,
                  fmt::format("could not place a {}-frame gap after removing {} frames", length, removed));
    }
    removed += length;
  }

  std::sort(gaps.begin(), gaps.end(), [](const Gap& a, const Gap& b) { return a.begin < b.begin; });
  for (const auto& g : gaps) {
    for (std::size_t i = g.begin; i < g.end; ++i) out.track[i].points.fill(std::nullopt);
  }
  out.gaps = std::move(gaps);
  return out;
}

FillResult fill_triangulation(const GappedTrack& gapped, std::span<const PredictionRecord> predictions,
                              std::span<const Camera> cameras, const std::string& individual,
                              const TriangulationOptions& options) {
  std::map<std::string, const Camera*> by_id;
  for (const auto& c : cameras) by_id[c.id] = &c;

  // (frame, keypoint) -> observations, cameras in id order.
  std::map<std::pair<std::int64_t, std::size_t>, std::map<std::string, Pixel>> views;
  for (const auto& p : predictions) {
    if (p.individual != individual || !by_id.contains(p.camera)) continue;
    views[{p.video_frame, index(p.keypoint)}][p.camera] = p.pixel;
  }

  FillResult out{gapped.track, {}};
  for (const auto& gap : gapped.gaps) {
    for (std::size_t i = gap.begin; i < gap.end; ++i) {
      auto& frame = out.track[i];
      for (const Keypoint kp : kAllKeypoints) {
        auto it = views.find({frame.frame, index(kp)});
        if (it == views.end() || it->second.size() < 2) {
          out.unfilled.emplace_back(frame.frame, kp);
          continue;
        }
        std::vector<ViewObservation> obs;
        for (const auto& [camera, pixel] : it->second) obs.push_back({by_id.at(camera)->model, pixel});
        try {
          frame.points[index(kp)] = triangulate(obs, options).point;
        } catch (const Error&) {
          out.unfilled.emplace_back(frame.frame, kp);
        }
      }
    }
  }
  return out;
}

KeypointTrack fill_linear(const GappedTrack& gapped) {
  KeypointTrack out = gapped.track;
  const std::size_t n = out.size();
  for (const auto& gap : gapped.gaps) {
    if (gap.begin == 0 || gap.end >= n) {
      throw Error(ErrorCode::BoundaryGap,
                  fmt::format("gap [{}, {}) touches the end of a {}-frame track", gap.begin, gap.end, n));
    }
    const auto& before = out[gap.begin - 1];
    const auto& after = out[gap.end];
    const double span = static_cast<double>(after.frame - before.frame);
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      if (!before.points[k] || !after.points[k]) continue;
      const Point3 a = *before.points[k];
      const Point3 b = *after.points[k];
      for (std::size_t i = gap.begin; i < gap.end; ++i) {
        const double s = static_cast<double>(out[i].frame - before.frame) / span;
        out[i].points[k] = a + s * (b - a);
      }
    }
  }
  return out;
}

FillComparison compare_fills(const KeypointTrack& truth, std::span<const std::pair<std::string, KeypointTrack>> fills,
                             std::span<const Gap> gaps) {
  std::vector<KeyedPoint3> reference;
  for (const auto& gap : gaps) {
    for (std::size_t i = gap.begin; i < gap.end && i < truth.size(); ++i) {
      for (const Keypoint kp : kAllKeypoints) {
        if (const auto& p = truth[i].points[index(kp)]) reference.push_back({{truth[i].frame, "", ""}, kp, *p});
      }
    }
  }
  FillComparison out;
  for (const auto& [name, track] : fills) {
    std::vector<KeyedPoint3> filled;
    for (const auto& gap : gaps) {
      for (std::size_t i = gap.begin; i < gap.end && i < track.size(); ++i) {
        for (const Keypoint kp : kAllKeypoints) {
          if (const auto& p = track[i].points[index(kp)]) filled.push_back({{track[i].frame, "", ""}, kp, *p});
        }
      }
    }
    out.methods.push_back(name);
    out.rmse_mm.push_back(rmse_report<3>(filled, reference));
  }
  return out;
}

}  // namespace keyprop
