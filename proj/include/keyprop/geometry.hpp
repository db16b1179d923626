#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>

namespace keyprop {

/// 3D position in millimetres. The frame (world or body-local) is stated at each use.
using Point3 = Eigen::Vector3d;
/// Image position in pixels.
using Pixel = Eigen::Vector2d;

/// Proper rigid motion p -> R p + t. Translation is in millimetres.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }

  /// Builds from a 4x4 homogeneous matrix. Throws ParseError if the upper-left
  /// block is not a rotation (within 1e-6) or the last row is not (0,0,0,1).
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;
  Eigen::Matrix4d matrix() const;

 private:
  Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// compose(a, b).apply(p) == a.apply(b.apply(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

bool is_rotation(const Eigen::Matrix3d& r, double tolerance = 1e-9);

/// Rotation matrix for an axis-angle vector (radians).
Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega);

/// Brown-Conrady coefficients in OpenCV order (k1, k2, p1, p2, k3).
struct Distortion {
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double k3 = 0.0;

  bool is_zero() const { return k1 == 0.0 && k2 == 0.0 && p1 == 0.0 && p2 == 0.0 && k3 == 0.0; }
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Distortion distortion;
  int width = 1;
  int height = 1;
};

struct Projection {
  Pixel pixel = Pixel::Zero();
  bool visible = false;
};

/// Pinhole camera with lens distortion. The extrinsic maps world -> camera.
class CameraModel {
 public:
  CameraModel() = default;
  /// Throws InvalidArgument unless focal lengths are positive and the
  /// principal point lies inside the image.
  CameraModel(const Intrinsics& intrinsics, const RigidTransform& extrinsic);

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const RigidTransform& extrinsic() const { return extrinsic_; }

  /// Camera centre in world coordinates.
  Point3 center() const;

  /// Normalized image-plane coordinates -> distorted pixel.
  Pixel distort(const Eigen::Vector2d& normalized) const;
  /// Same as distort(), also returning d(pixel)/d(normalized).
  Pixel distort(const Eigen::Vector2d& normalized, Eigen::Matrix2d& jacobian) const;
  /// Inverse of distort() by Newton iteration.
  Eigen::Vector2d undistort(const Pixel& pixel) const;

  /// Pixel for a point given in the camera frame; the 2x3 jacobian is with
  /// respect to that camera-frame point. Requires z > 0.
  Pixel project_camera_frame(const Point3& p_cam, Eigen::Matrix<double, 2, 3>* jacobian = nullptr) const;

  /// World point at the given camera-frame depth along the pixel's ray.
  Point3 unproject(const Pixel& pixel, double depth) const;
  /// Unit viewing direction of the pixel in world coordinates.
  Eigen::Vector3d ray_direction(const Pixel& pixel) const;

  bool in_image(const Pixel& pixel) const;

 private:
  Intrinsics intrinsics_;
  RigidTransform extrinsic_;
};

/// Projects a world point. visible is false behind the camera or outside the
/// image. Throws NonFinite for non-finite input.
Projection project(const CameraModel& camera, const Point3& world);

struct RigidFit {
  RigidTransform transform;
  double rms_residual = 0.0;  ///< mm
};

/// Least-squares rotation + translation taking source onto target (Kabsch with
/// reflection correction). Throws DegenerateConfiguration for fewer than three
/// points or collinear sources.
RigidFit rigid_fit(std::span<const Point3> source, std::span<const Point3> target);

struct ViewObservation {
  CameraModel camera;
  Pixel pixel;
};

struct TriangulationOptions {
  double min_angle_deg = 1.0;
  int max_iterations = 50;
};

struct Triangulation {
  Point3 point;
  double rms_px = 0.0;
};

/// Linear (DLT) estimate refined by Levenberg-Marquardt on the point. Throws
/// DegenerateGeometry when no pair of views from distinct centres subtends
/// at least options.min_angle_deg.
Triangulation triangulate(std::span<const ViewObservation> observations,
                          const TriangulationOptions& options = {});

struct Correspondence {
  Point3 world;
  Pixel pixel;
};

struct PnpResult {
  RigidTransform extrinsic;  ///< world -> camera
  double rms_px = 0.0;
};

/// Camera pose from 2D-3D correspondences: normalized DLT then LM refinement.
/// Throws DegenerateConfiguration for fewer than six or coplanar points.
PnpResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics);

}  // namespace keyprop
