#pragma once

// Helpers shared by the test binaries. The projection here is written out
// from the pinhole + Brown-Conrady formulas and serves as an oracle.

#include "keyprop/error.hpp"
#include "keyprop/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

using keyprop::Point3;
using keyprop::Pixel;

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Point3 random_point(std::mt19937_64& rng, const Point3& lo, const Point3& hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {lo.x() + u(rng) * (hi.x() - lo.x()), lo.y() + u(rng) * (hi.y() - lo.y()),
          lo.z() + u(rng) * (hi.z() - lo.z())};
}

inline keyprop::Intrinsics rig_intrinsics(bool distorted = true) {
  keyprop::Intrinsics k;
  k.fx = 2000.0;
  k.fy = 2004.0;
  k.cx = 1921.5;
  k.cy = 1078.0;
  k.width = 3840;
  k.height = 2160;
  if (distorted) k.distortion = {-0.08, 0.02, 4e-4, -3e-4, 0.001};
  return k;
}

/// Extrinsic of a camera at `centre` looking at `target` with world z up.
inline keyprop::RigidTransform look_at(const Point3& centre, const Point3& target) {
  const Eigen::Vector3d z = (target - centre).normalized();
  const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r << x.transpose(), y.transpose(), z.transpose();
  return {r, -r * centre};
}

/// Oracle projection of a world point.
inline Pixel oracle_project(const keyprop::Intrinsics& k, const keyprop::RigidTransform& extrinsic, const Point3& w) {
  const Point3 c = extrinsic.rotation() * w + extrinsic.translation();
  const double x = c.x() / c.z();
  const double y = c.y() / c.z();
  const double r2 = x * x + y * y;
  const auto& d = k.distortion;
  const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2 + d.k3 * r2 * r2 * r2;
  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;
  return {k.fx * xd + k.cx, k.fy * yd + k.cy};
}

/// Rotation angle between two rotation matrices, radians.
inline double rotation_distance(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  // ||A - B||_F = 2 sqrt(2) sin(theta / 2); acos of the trace loses precision near zero.
  const double s = std::min(1.0, (a - b).norm() / (2.0 * std::sqrt(2.0)));
  return 2.0 * std::asin(s);
}

/// Runs `f` and reports whether it threw keyprop::Error with the given code.
template <typename F>
bool throws_code(F&& f, keyprop::ErrorCode code) {
  try {
    f();
  } catch (const keyprop::Error& e) {
    return e.code() == code;
  }
  return false;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("keyprop_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
