#include "keyprop/quality.hpp"

#include "keyprop/error.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <tuple>

namespace keyprop {

double gesd_critical_value(std::size_t n, std::size_t i, double alpha) {
  const double remaining = static_cast<double>(n - i + 1);
  const double df = static_cast<double>(n - i - 1);
  const double p = 1.0 - alpha / (2.0 * remaining);
  const boost::math::students_t dist(df);
  const double t = boost::math::quantile(dist, p);
  return static_cast<double>(n - i) * t / std::sqrt((df + t * t) * remaining);
}

std::vector<std::size_t> gesd_outliers(std::span<const double> values, const GesdOptions& options) {
  const std::size_t n = values.size();
  if (n <= 10) throw Error(ErrorCode::TooFewSamples, fmt::format("GESD needs more than 10 samples, got {}", n));
  if (!(options.max_outlier_fraction > 0.0 && options.max_outlier_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidArgument, "max_outlier_fraction must lie in (0, 0.5)");
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "GESD input contains a non-finite value");
  }

  const auto max_outliers =
      static_cast<std::size_t>(std::ceil(options.max_outlier_fraction * static_cast<double>(n) - 1e-12));
  std::vector<std::size_t> remaining(n);
  for (std::size_t k = 0; k < n; ++k) remaining[k] = k;
  std::vector<std::size_t> removed;
  std::size_t outliers = 0;

  for (std::size_t i = 1; i <= max_outliers; ++i) {
    double mean = 0.0;
    for (auto k : remaining) mean += values[k];
    mean /= static_cast<double>(remaining.size());
    double ss = 0.0;
    for (auto k : remaining) ss += (values[k] - mean) * (values[k] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(remaining.size() - 1));
    if (!(sd > 0.0)) break;

    std::size_t worst = 0;
    double worst_dev = -1.0;
    for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
      const double dev = std::abs(values[remaining[pos]] - mean);
      if (dev > worst_dev) {
        worst_dev = dev;
        worst = pos;
      }
    }
    const double statistic = worst_dev / sd;
    if (statistic > gesd_critical_value(n, i, options.alpha)) outliers = i;
    removed.push_back(remaining[worst]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(worst));
  }

  std::vector<std::size_t> out(removed.begin(), removed.begin() + static_cast<std::ptrdiff_t>(outliers));
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

double FilterResult::drop_fraction() const {
  const std::size_t total = kept.size() + dropped.size();
  return total == 0 ? 0.0 : static_cast<double>(dropped.size()) / static_cast<double>(total);
}

FilterResult filter_frames(std::span<const KeypointError> errors, const GesdOptions& options, int min_flagged) {
  // Sort once so the per-keypoint series (and hence the result) do not depend
  // on input order.
  std::vector<const KeypointError*> ordered;
  ordered.reserve(errors.size());
  for (const auto& e : errors) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const KeypointError* a, const KeypointError* b) {
    return std::tie(a->keypoint, a->key) < std::tie(b->keypoint, b->key);
  });

  std::map<FrameKey, int> flags;
  FilterResult result;
  for (const auto* e : ordered) flags.try_emplace(e->key, 0);

  auto begin = ordered.begin();
  while (begin != ordered.end()) {
    const Keypoint kp = (*begin)->keypoint;
    auto end = std::find_if(begin, ordered.end(), [kp](const KeypointError* e) { return e->keypoint != kp; });
    const auto count = static_cast<std::size_t>(end - begin);
    if (count > 10) {
      std::vector<double> series;
      series.reserve(count);
      for (auto it = begin; it != end; ++it) series.push_back((*it)->error);
      for (auto idx : gesd_outliers(series, options)) {
        ++flags[(*(begin + static_cast<std::ptrdiff_t>(idx)))->key];
        ++result.flagged[index(kp)];
      }
    }
    begin = end;
  }

  for (const auto& [key, n] : flags) (n >= min_flagged ? result.dropped : result.kept).push_back(key);
  return result;
}

double GapHistogram::fraction_at_most_30() const {
  return total() == 0 ? 1.0 : static_cast<double>(single + short_runs) / static_cast<double>(total());
}

GapHistogram& GapHistogram::operator+=(const GapHistogram& other) {
  single += other.single;
  short_runs += other.short_runs;
  long_runs += other.long_runs;
  return *this;
}

GapHistogram gap_statistics(std::span<const std::int64_t> dropped) {
  GapHistogram h;
  auto record = [&h](std::int64_t length) {
    if (length == 1) {
      ++h.single;
    } else if (length <= 30) {
      ++h.short_runs;
    } else {
      ++h.long_runs;
    }
  };
  std::size_t i = 0;
  while (i < dropped.size()) {
    std::int64_t length = 1;
    std::size_t j = i + 1;
    while (j < dropped.size() && dropped[j] <= dropped[j - 1] + 1) {
      if (dropped[j] == dropped[j - 1] + 1) ++length;
      ++j;
    }
    record(length);
    i = j;
  }
  return h;
}

// ---------------------------------------------------------------------------

namespace {

using PairKey = std::pair<FrameKey, Keypoint>;

template <int Dim>
std::map<PairKey, Eigen::Matrix<double, Dim, 1>> index_points(std::span<const KeyedPoint<Dim>> points) {
  std::map<PairKey, Eigen::Matrix<double, Dim, 1>> out;
  for (const auto& p : points) out.insert_or_assign(PairKey{p.key, p.keypoint}, p.position);
  return out;
}

}  // namespace

template <int Dim>
MetricReport rmse_report(std::span<const KeyedPoint<Dim>> predictions, std::span<const KeyedPoint<Dim>> annotations) {
  const auto pred = index_points(predictions);
  const auto ann = index_points(annotations);
  PerKeypoint<double> sum_sq{};
  PerKeypoint<std::size_t> count{};
  // Walk the smaller map in key order so the reduction is order-independent.
  const auto& outer = pred.size() <= ann.size() ? pred : ann;
  const auto& inner = pred.size() <= ann.size() ? ann : pred;
  for (const auto& [key, pos] : outer) {
    auto it = inner.find(key);
    if (it == inner.end()) continue;
    sum_sq[index(key.second)] += (pos - it->second).squaredNorm();
    ++count[index(key.second)];
  }
  MetricReport report;
  std::size_t matched = 0;
  for (std::size_t k = 0; k < kKeypointCount; ++k) {
    if (count[k] == 0) continue;
    matched += count[k];
    report[k] = KeypointMetric{count[k], std::sqrt(sum_sq[k] / static_cast<double>(count[k]))};
  }
  if (matched == 0) throw Error(ErrorCode::NoMatchedPairs, "no prediction matches an annotation");
  return report;
}

template MetricReport rmse_report<2>(std::span<const KeyedPoint<2>>, std::span<const KeyedPoint<2>>);
template MetricReport rmse_report<3>(std::span<const KeyedPoint<3>>, std::span<const KeyedPoint<3>>);

std::vector<MetricReport> pck_report(std::span<const KeyedPixel> predictions, std::span<const KeyedPixel> annotations,
                                     const std::map<FrameKey, double>& bbox_widths,
                                     std::span<const double> thresholds) {
  const auto pred = index_points(predictions);
  const auto ann = index_points(annotations);
  std::vector<PerKeypoint<std::size_t>> hits(thresholds.size(), PerKeypoint<std::size_t>{});
  PerKeypoint<std::size_t> count{};
  std::size_t matched = 0;
  for (const auto& [key, pos] : pred) {
    auto it = ann.find(key);
    if (it == ann.end()) continue;
    auto w = bbox_widths.find(key.first);
    if (w == bbox_widths.end() || !(w->second > 0.0)) continue;
    const double dist = (pos - it->second).norm();
    ++count[index(key.second)];
    ++matched;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (dist < thresholds[t] * w->second) ++hits[t][index(key.second)];
    }
  }
  if (matched == 0) throw Error(ErrorCode::NoMatchedPairs, "no prediction matches an annotation with a bounding box");
  std::vector<MetricReport> out(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    for (std::size_t k = 0; k < kKeypointCount; ++k) {
      if (count[k] == 0) continue;
      out[t][k] = KeypointMetric{count[k], static_cast<double>(hits[t][k]) / static_cast<double>(count[k])};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

PoseOrientation pose_orientation(const PerKeypoint<std::optional<Point3>>& keypoints, BodyPart part) {
  const bool head = part == BodyPart::Head;
  const Keypoint origin_kp = head ? Keypoint::Beak : Keypoint::Tail;
  const Keypoint left_kp = head ? Keypoint::LeftEye : Keypoint::LeftShoulder;
  const Keypoint right_kp = head ? Keypoint::RightEye : Keypoint::RightShoulder;
  const auto& origin = keypoints[index(origin_kp)];
  const auto& left = keypoints[index(left_kp)];
  const auto& right = keypoints[index(right_kp)];
  if (!origin || !left || !right) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{} orientation needs {}, {} and {}", part_name(part), keypoint_name(origin_kp),
                            keypoint_name(left_kp), keypoint_name(right_kp)));
  }
  const Eigen::Vector3d to_left = *left - *origin;
  const Eigen::Vector3d to_right = *right - *origin;
  const Eigen::Vector3d cross = to_left.cross(to_right);
  if (!(cross.norm() > 1e-9 * to_left.norm() * to_right.norm())) {
    throw Error(ErrorCode::DegeneratePlane, fmt::format("{} keypoints are collinear", part_name(part)));
  }
  PoseOrientation out;
  out.part = part;
  out.normal = cross.normalized();
  for (int axis = 0; axis < 3; ++axis) {
    out.angles_deg[axis] = std::acos(std::clamp(out.normal(axis), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  }
  return out;
}

std::array<int, 3> quantize_angles(const std::array<double, 3>& angles_deg, double bin_deg) {
  std::array<int, 3> bins{};
  for (int axis = 0; axis < 3; ++axis) {
    bins[axis] = static_cast<int>(std::floor(angles_deg[axis] / bin_deg + 1e-9));
  }
  return bins;
}

UniquePoseCounts count_unique_poses(std::span<const PoseSample> samples, double bin_deg) {
  std::set<std::array<int, 3>> head;
  std::set<std::array<int, 3>> body;
  std::set<std::pair<std::array<int, 3>, std::array<int, 3>>> combined;
  for (const auto& s : samples) {
    std::optional<std::array<int, 3>> h;
    std::optional<std::array<int, 3>> b;
    if (s.head) head.insert(*(h = quantize_angles(s.head->angles_deg, bin_deg)));
    if (s.body) body.insert(*(b = quantize_angles(s.body->angles_deg, bin_deg)));
    if (h && b) combined.emplace(*h, *b);
  }
  return {head.size(), body.size(), combined.size()};
}

}  // namespace keyprop
