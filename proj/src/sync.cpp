#include "keyprop/sync.hpp"

#include "keyprop/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace keyprop {

namespace {

void merge_close(FlashTimeline& timeline, double min_gap_frames) {
  std::vector<Flash> kept;
  for (const auto& f : timeline.flashes) {
    if (!kept.empty() && static_cast<double>(f.frame - kept.back().frame) < min_gap_frames) continue;
    kept.push_back(f);
  }
  timeline.flashes = std::move(kept);
}

}  // namespace

FlashTimeline detect_flashes_video(const IntensitySignal& signal, const FlashOptions& options) {
  if (signal.samples.empty()) throw Error(ErrorCode::NoFlashesDetected, "empty intensity signal");
  if (!(signal.frame_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
  FlashTimeline out;
  out.source = FlashSource::Video;
  out.frame_rate = signal.frame_rate;
  for (std::size_t i = 1; i < signal.samples.size(); ++i) {
    if (signal.samples[i] - signal.samples[i - 1] > options.intensity_jump) {
      out.flashes.push_back({static_cast<std::int64_t>(i), false});
    }
  }
  merge_close(out, 0.5 * options.period_s * signal.frame_rate);
  if (out.flashes.empty()) throw Error(ErrorCode::NoFlashesDetected, "no intensity jump above threshold");
  return out;
}

FlashTimeline detect_flashes_mocap(std::span<const int> marker_counts, double frame_rate,
                                   const FlashOptions& options) {
  FlashTimeline out;
  out.source = FlashSource::Mocap;
  out.frame_rate = frame_rate;
  enum class State { Unknown, Off, On } state = State::Unknown;
  for (std::size_t i = 0; i < marker_counts.size(); ++i) {
    const int count = marker_counts[i];
    if (count >= options.on_markers) {
      if (state == State::Off) out.flashes.push_back({static_cast<std::int64_t>(i), false});
      state = State::On;
    } else if (count <= options.off_markers) {
      state = State::Off;
    }
  }
  merge_close(out, 0.5 * options.period_s * frame_rate);
  if (out.flashes.empty()) throw Error(ErrorCode::NoFlashesDetected, "marker count never switched on");
  return out;
}

FlashTimeline fill_missing_flashes(const FlashTimeline& timeline, const FlashOptions& options) {
  if (timeline.flashes.size() < 2) {
    throw Error(ErrorCode::InsufficientMatches, "need at least two detected flashes to fill gaps");
  }
  const double period = options.period_s * timeline.frame_rate;
  FlashTimeline out = timeline;
  out.flashes.clear();
  out.flashes.push_back(timeline.flashes.front());
  for (std::size_t i = 1; i < timeline.flashes.size(); ++i) {
    const auto& prev = timeline.flashes[i - 1];
    const auto& next = timeline.flashes[i];
    const double interval = static_cast<double>(next.frame - prev.frame);
    const double periods = std::round(interval / period);
    if (periods < 1.0 || std::abs(interval - periods * period) > options.period_tolerance * period) {
      throw Error(ErrorCode::IrregularPeriod,
                  fmt::format("flash interval of {} frames (frames {} -> {}) is not a multiple of {} frames",
                              interval, prev.frame, next.frame, period));
    }
    for (int k = 1; k < static_cast<int>(periods); ++k) {
      out.flashes.push_back({prev.frame + static_cast<std::int64_t>(std::llround(k * period)), true});
    }
    out.flashes.push_back(next);
  }
  return out;
}

std::int64_t ClockMap::map_frame(std::int64_t video_frame) const {
  return static_cast<std::int64_t>(std::llround(map(static_cast<double>(video_frame))));
}

ClockMap build_clock_map(const FlashTimeline& video, const FlashTimeline& mocap, const ClockOptions& options) {
  // Order pairing runs over the filled timelines; the fit only uses pairs
  // where both onsets were observed, so filled positions cannot bias it.
  const std::size_t paired = std::min(video.flashes.size(), mocap.flashes.size());
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < paired; ++i) {
    if (video.flashes[i].inferred || mocap.flashes[i].inferred) continue;
    pairs.emplace_back(static_cast<double>(video.flashes[i].frame), static_cast<double>(mocap.flashes[i].frame));
  }
  const std::size_t n = pairs.size();
  if (n < 2) {
    throw Error(ErrorCode::InsufficientMatches, fmt::format("only {} observed flash pair(s) can be matched", n));
  }
  // Centre the abscissa before the least-squares fit to keep it well conditioned.
  double mean_v = 0.0;
  double mean_m = 0.0;
  for (const auto& [v, m] : pairs) {
    mean_v += v;
    mean_m += m;
  }
  mean_v /= static_cast<double>(n);
  mean_m /= static_cast<double>(n);
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [v, m] : pairs) {
    sxx += (v - mean_v) * (v - mean_v);
    sxy += (v - mean_v) * (m - mean_m);
  }
  if (sxx <= 0.0) throw Error(ErrorCode::InsufficientMatches, "matched flashes share one video frame");

  ClockMap map;
  map.rate_ratio = sxy / sxx;
  map.offset = mean_m - map.rate_ratio * mean_v;
  map.matched = n;
  double sum_sq = 0.0;
  for (const auto& [v, m] : pairs) {
    const double r = map.map(v) - m;
    sum_sq += r * r;
  }
  map.residual_rms = std::sqrt(sum_sq / static_cast<double>(n));

  const double nominal = mocap.frame_rate / video.frame_rate;
  if (std::abs(map.rate_ratio / nominal - 1.0) > options.rate_tolerance) {
    throw Error(ErrorCode::RateMismatch, fmt::format("fitted rate ratio {:.6f} deviates from nominal {:.6f}",
                                                     map.rate_ratio, nominal));
  }
  if (map.residual_rms > options.max_residual_frames) {
    throw Error(ErrorCode::ResidualTooHigh,
                fmt::format("clock fit residual {:.3f} mo-cap frames exceeds {:.3f}", map.residual_rms,
                            options.max_residual_frames));
  }
  return map;
}

}  // namespace keyprop
