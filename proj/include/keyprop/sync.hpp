#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace keyprop {

/// Per-frame maximum pixel value inside the LED crop box.
struct IntensitySignal {
  std::vector<double> samples;
  double frame_rate = 30.0;
};

enum class FlashSource { Video, Mocap };

struct Flash {
  std::int64_t frame = 0;
  bool inferred = false;
};

struct FlashTimeline {
  FlashSource source = FlashSource::Video;
  double frame_rate = 30.0;
  std::vector<Flash> flashes;  ///< strictly increasing frames
};

struct FlashOptions {
  double intensity_jump = 30.0;  ///< onset when the frame-to-frame rise exceeds this
  double period_s = 6.0;         ///< onset-to-onset interval
  double period_tolerance = 0.1; ///< fraction of a period allowed when filling gaps
  int off_markers = 4;
  int on_markers = 6;
};

/// Onsets where the intensity rises by more than options.intensity_jump.
/// Onsets closer than half a period to the previous kept one are dropped.
/// Throws NoFlashesDetected.
FlashTimeline detect_flashes_video(const IntensitySignal& signal, const FlashOptions& options = {});

/// Onsets where the sync object's marker count goes from <= off_markers to
/// >= on_markers (intermediate counts keep the previous state). Throws
/// NoFlashesDetected.
FlashTimeline detect_flashes_mocap(std::span<const int> marker_counts, double frame_rate = 100.0,
                                   const FlashOptions& options = {});

/// Inserts flagged onsets into gaps that span k >= 2 periods. Never moves a
/// detected onset. Throws IrregularPeriod for intervals that are not near a
/// whole number of periods, InsufficientMatches for fewer than two flashes.
FlashTimeline fill_missing_flashes(const FlashTimeline& timeline, const FlashOptions& options = {});

/// Affine video-frame -> mo-cap-frame map.
struct ClockMap {
  double offset = 0.0;      ///< mo-cap frame of video frame 0
  double rate_ratio = 1.0;  ///< mo-cap frames per video frame
  double residual_rms = 0.0;
  std::size_t matched = 0;  ///< observed (non-inferred) pairs used in the fit

  double map(double video_frame) const { return offset + rate_ratio * video_frame; }
  /// Nearest mo-cap frame.
  std::int64_t map_frame(std::int64_t video_frame) const;
};

struct ClockOptions {
  double max_residual_frames = 0.5;
  double rate_tolerance = 1e-3;  ///< allowed relative deviation from the nominal ratio
};

/// Pairs flashes in order from the first onset of each stream and fits the
/// affine map by least squares over the pairs observed in both streams.
/// Throws InsufficientMatches (< 2 pairs), ResidualTooHigh or RateMismatch.
ClockMap build_clock_map(const FlashTimeline& video, const FlashTimeline& mocap, const ClockOptions& options = {});

}  // namespace keyprop
