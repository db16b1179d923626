#include "keyprop/calibration.hpp"

#include "keyprop/error.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace keyprop {

std::array<double, 3> principal_extents(std::span<const Point3> points) {
  std::array<double, 3> out{};
  if (points.empty()) return out;
  Point3 mean = Point3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  for (int axis = 0; axis < 3; ++axis) {
    const Eigen::Vector3d dir = eig.eigenvectors().col(axis);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : points) {
      const double s = dir.dot(p - mean);
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
    out[axis] = hi - lo;
  }
  std::sort(out.begin(), out.end(), std::greater<>());
  return out;
}

CalibrationResult calibrate_extrinsics(std::span<const ExtrinsicObservation> observations,
                                       const Intrinsics& intrinsics, const CalibrationOptions& options) {
  std::vector<Correspondence> pooled;
  std::vector<Point3> world;
  for (const auto& obs : observations) {
    for (const auto& click : obs.clicks) {
      pooled.push_back({click.world, click.pixel});
      world.push_back(click.world);
    }
  }

  CalibrationReport report;
  report.correspondences = pooled.size();
  report.principal_extents_mm = principal_extents(world);
  const auto& ext = report.principal_extents_mm;
  if (pooled.size() < 6 || ext[2] <= options.min_extent_mm) {
    throw Error(ErrorCode::PoorCoverage,
                fmt::format("{} correspondences spanning {:.0f} x {:.0f} x {:.0f} mm; need >= 6 spanning more than "
                            "{:.0f} mm on every principal axis",
                            pooled.size(), ext[0], ext[1], ext[2], options.min_extent_mm));
  }

  const auto pnp = solve_pnp(pooled, intrinsics);
  CalibrationResult result{CameraModel(intrinsics, pnp.extrinsic), {}};
  report.rms_px = pnp.rms_px;
  for (const auto& obs : observations) {
    double sum_sq = 0.0;
    for (const auto& click : obs.clicks) {
      sum_sq += (project(result.camera, click.world).pixel - click.pixel).squaredNorm();
    }
    report.per_observation_rms_px.push_back(
        obs.clicks.empty() ? 0.0 : std::sqrt(sum_sq / static_cast<double>(obs.clicks.size())));
  }
  if (report.rms_px > options.max_rms_px) {
    throw Error(ErrorCode::HighReprojection,
                fmt::format("reprojection RMS {:.2f} px exceeds {:.2f} px", report.rms_px, options.max_rms_px));
  }
  result.report = std::move(report);
  return result;
}

}  // namespace keyprop
