#include "keyprop/geometry.hpp"

#include "keyprop/error.hpp"
#include "levenberg_marquardt.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace keyprop {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

void require_finite(const Point3& p, const char* what) {
  if (!p.allFinite()) throw Error(ErrorCode::NonFinite, fmt::format("{}: non-finite point", what));
}

}  // namespace

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  if (!m.allFinite() || !is_rotation(r, 1e-6)) {
    throw Error(ErrorCode::ParseError, "extrinsic matrix does not contain a rotation");
  }
  if (std::abs(m(3, 0)) + std::abs(m(3, 1)) + std::abs(m(3, 2)) > 1e-12 || std::abs(m(3, 3) - 1.0) > 1e-12) {
    throw Error(ErrorCode::ParseError, "extrinsic matrix last row must be (0, 0, 0, 1)");
  }
  return {r, m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

RigidTransform invert(const RigidTransform& t) { return t.inverse(); }

bool is_rotation(const Eigen::Matrix3d& r, double tolerance) {
  const double orth = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return orth <= tolerance && std::abs(r.determinant() - 1.0) <= tolerance;
}

Eigen::Matrix3d exp_so3(const Eigen::Vector3d& omega) {
  const double angle = omega.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

// ---------------------------------------------------------------------------

CameraModel::CameraModel(const Intrinsics& intrinsics, const RigidTransform& extrinsic)
    : intrinsics_(intrinsics), extrinsic_(extrinsic) {
  const auto& k = intrinsics_;
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
  if (k.width <= 0 || k.height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  if (!(k.cx >= 0.0 && k.cx <= k.width && k.cy >= 0.0 && k.cy <= k.height)) {
    throw Error(ErrorCode::InvalidArgument, "principal point outside the image");
  }
}

Point3 CameraModel::center() const {
  return -(extrinsic_.rotation().transpose() * extrinsic_.translation());
}

Pixel CameraModel::distort(const Eigen::Vector2d& normalized) const {
  Eigen::Matrix2d unused;
  return distort(normalized, unused);
}

Pixel CameraModel::distort(const Eigen::Vector2d& n, Eigen::Matrix2d& jacobian) const {
  const auto& d = intrinsics_.distortion;
  const double x = n.x();
  const double y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d.k1 + r2 * (d.k2 + r2 * d.k3));
  const double dradial = d.k1 + r2 * (2.0 * d.k2 + 3.0 * d.k3 * r2);

  const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2.0 * x * x);
  const double yd = y * radial + d.p1 * (r2 + 2.0 * y * y) + 2.0 * d.p2 * x * y;

  Eigen::Matrix2d dd;
  dd(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * d.p1 * y + 6.0 * d.p2 * x;
  dd(0, 1) = 2.0 * x * y * dradial + 2.0 * d.p1 * x + 2.0 * d.p2 * y;
  dd(1, 0) = dd(0, 1);
  dd(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * d.p1 * y + 2.0 * d.p2 * x;

  jacobian.row(0) = intrinsics_.fx * dd.row(0);
  jacobian.row(1) = intrinsics_.fy * dd.row(1);
  return {intrinsics_.fx * xd + intrinsics_.cx, intrinsics_.fy * yd + intrinsics_.cy};
}

Eigen::Vector2d CameraModel::undistort(const Pixel& pixel) const {
  const auto& k = intrinsics_;
  Eigen::Vector2d n((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy);
  if (k.distortion.is_zero()) return n;

  Eigen::Matrix2d jac;
  for (int iter = 0; iter < 50; ++iter) {
    const Pixel predicted = distort(n, jac);
    const Eigen::Vector2d step = jac.lu().solve(predicted - pixel);
    if (!step.allFinite()) break;
    n -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-16) break;
  }
  return n;
}

Pixel CameraModel::project_camera_frame(const Point3& p, Eigen::Matrix<double, 2, 3>* jacobian) const {
  const double inv_z = 1.0 / p.z();
  const Eigen::Vector2d n(p.x() * inv_z, p.y() * inv_z);
  Eigen::Matrix2d dd;
  const Pixel pixel = distort(n, dd);
  if (jacobian) {
    Eigen::Matrix<double, 2, 3> dn;
    dn << inv_z, 0.0, -n.x() * inv_z, 0.0, inv_z, -n.y() * inv_z;
    *jacobian = dd * dn;
  }
  return pixel;
}

Point3 CameraModel::unproject(const Pixel& pixel, double depth) const {
  const Eigen::Vector2d n = undistort(pixel);
  const Point3 p_cam(n.x() * depth, n.y() * depth, depth);
  return extrinsic_.inverse().apply(p_cam);
}

Eigen::Vector3d CameraModel::ray_direction(const Pixel& pixel) const {
  const Eigen::Vector2d n = undistort(pixel);
  return (extrinsic_.rotation().transpose() * Eigen::Vector3d(n.x(), n.y(), 1.0)).normalized();
}

bool CameraModel::in_image(const Pixel& pixel) const {
  return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < intrinsics_.width && pixel.y() < intrinsics_.height;
}

Projection project(const CameraModel& camera, const Point3& world) {
  require_finite(world, "project");
  const Point3 p = camera.extrinsic().apply(world);
  Projection out;
  if (p.z() <= 0.0) {
    // Behind the camera: report the principal point so the pixel stays finite.
    out.pixel = Pixel(camera.intrinsics().cx, camera.intrinsics().cy);
    out.visible = false;
    return out;
  }
  out.pixel = camera.project_camera_frame(p);
  out.visible = out.pixel.allFinite() && camera.in_image(out.pixel);
  if (!out.pixel.allFinite()) out.pixel = Pixel(camera.intrinsics().cx, camera.intrinsics().cy);
  return out;
}

// ---------------------------------------------------------------------------

RigidFit rigid_fit(std::span<const Point3> source, std::span<const Point3> target) {
  if (source.size() != target.size()) {
    throw Error(ErrorCode::DegenerateConfiguration, "rigid_fit: source and target differ in length");
  }
  const auto n = static_cast<Eigen::Index>(source.size());
  if (n < 3) throw Error(ErrorCode::DegenerateConfiguration, "rigid_fit: need at least 3 points");

  Point3 source_mean = Point3::Zero();
  Point3 target_mean = Point3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    require_finite(source[i], "rigid_fit");
    require_finite(target[i], "rigid_fit");
    source_mean += source[i];
    target_mean += target[i];
  }
  source_mean /= static_cast<double>(n);
  target_mean /= static_cast<double>(n);

  Eigen::Matrix<double, 3, Eigen::Dynamic> s(3, n);
  Eigen::Matrix<double, 3, Eigen::Dynamic> t(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.col(i) = source[i] - source_mean;
    t.col(i) = target[i] - target_mean;
  }

  // Collinear (or coincident) sources leave the rotation about the line free.
  const Eigen::JacobiSVD<Eigen::MatrixXd> spread(s);
  const auto sv = spread.singularValues();
  if (sv(0) <= 1e-12 || sv(1) <= 1e-9 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "rigid_fit: source points are collinear");
  }

  const Eigen::Matrix3d h = s * t.transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Matrix3d correction = Eigen::Matrix3d::Identity();
  correction(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = v * correction * u.transpose();

  RigidFit fit;
  fit.transform = RigidTransform(r, target_mean - r * source_mean);
  double sum_sq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sum_sq += (fit.transform.apply(source[i]) - target[i]).squaredNorm();
  }
  fit.rms_residual = std::sqrt(sum_sq / static_cast<double>(n));
  return fit;
}

// ---------------------------------------------------------------------------

namespace {

struct PointProblem {
  std::span<const ViewObservation> views;

  void evaluate(const Point3& x, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 3>& j) const {
    const auto m = static_cast<Eigen::Index>(views.size());
    r.resize(2 * m);
    j.resize(2 * m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& cam = views[i].camera;
      const Point3 p = cam.extrinsic().apply(x);
      if (p.z() <= 0.0) {
        r.segment<2>(2 * i).setConstant(std::numeric_limits<double>::infinity());
        j.middleRows<2>(2 * i).setZero();
        continue;
      }
      Eigen::Matrix<double, 2, 3> dp;
      r.segment<2>(2 * i) = cam.project_camera_frame(p, &dp) - views[i].pixel;
      j.middleRows<2>(2 * i) = dp * cam.extrinsic().rotation();
    }
  }

  Point3 plus(const Point3& x, const Eigen::Vector3d& delta) const { return x + delta; }
};

double reprojection_rms(std::span<const ViewObservation> views, const Point3& x) {
  double sum_sq = 0.0;
  for (const auto& v : views) {
    const Point3 p = v.camera.extrinsic().apply(x);
    sum_sq += (v.camera.project_camera_frame(p) - v.pixel).squaredNorm();
  }
  return std::sqrt(sum_sq / static_cast<double>(views.size()));
}

}  // namespace

Triangulation triangulate(std::span<const ViewObservation> observations, const TriangulationOptions& options) {
  const auto m = static_cast<Eigen::Index>(observations.size());
  if (m < 2) throw Error(ErrorCode::DegenerateGeometry, "triangulate: need at least 2 views");

  std::vector<Eigen::Vector2d> normalized(observations.size());
  std::vector<Eigen::Vector3d> rays(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    if (!observations[i].pixel.allFinite()) throw Error(ErrorCode::NonFinite, "triangulate: non-finite pixel");
    normalized[i] = observations[i].camera.undistort(observations[i].pixel);
    rays[i] = observations[i].camera.extrinsic().rotation().transpose() *
              Eigen::Vector3d(normalized[i].x(), normalized[i].y(), 1.0);
    rays[i].normalize();
  }

  double best_angle = 0.0;
  for (std::size_t a = 0; a < rays.size(); ++a) {
    for (std::size_t b = a + 1; b < rays.size(); ++b) {
      const double baseline = (observations[a].camera.center() - observations[b].camera.center()).norm();
      if (baseline <= 1e-9) continue;
      const double angle = std::atan2(rays[a].cross(rays[b]).norm(), rays[a].dot(rays[b]));
      best_angle = std::max(best_angle, angle);
    }
  }
  const double min_angle = options.min_angle_deg * std::numbers::pi / 180.0;
  if (best_angle < min_angle) {
    throw Error(ErrorCode::DegenerateGeometry,
                fmt::format("triangulate: rays subtend {:.3f} deg, below {:.3f} deg",
                            best_angle * 180.0 / std::numbers::pi, options.min_angle_deg));
  }

  Eigen::MatrixXd a(2 * m, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Matrix<double, 3, 4> p = observations[i].camera.extrinsic().matrix().topRows<3>();
    a.row(2 * i) = normalized[i].x() * p.row(2) - p.row(0);
    a.row(2 * i + 1) = normalized[i].y() * p.row(2) - p.row(1);
  }
  // Rows are scale-free; normalize them so every view weighs the same.
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i).normalize();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-300) throw Error(ErrorCode::DegenerateGeometry, "triangulate: point at infinity");
  Point3 x = h.head<3>() / h(3);

  const PointProblem problem{observations};
  detail::LmSettings settings;
  settings.max_iterations = options.max_iterations;
  x = detail::levenberg_marquardt<3>(problem, x, settings);
  return {x, reprojection_rms(observations, x)};
}

// ---------------------------------------------------------------------------

namespace {

struct PoseProblem {
  std::span<const Correspondence> points;
  CameraModel camera;  // intrinsics only; extrinsic unused

  void evaluate(const RigidTransform& pose, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 6>& j) const {
    const auto m = static_cast<Eigen::Index>(points.size());
    r.resize(2 * m);
    j.resize(2 * m, 6);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Point3 p = pose.apply(points[i].world);
      if (p.z() <= 0.0) {
        r.segment<2>(2 * i).setConstant(std::numeric_limits<double>::infinity());
        j.middleRows<2>(2 * i).setZero();
        continue;
      }
      Eigen::Matrix<double, 2, 3> dp;
      r.segment<2>(2 * i) = camera.project_camera_frame(p, &dp) - points[i].pixel;
      // Left perturbation: p' = exp(w) p + dt.
      j.block<2, 3>(2 * i, 0) = -dp * skew(p);
      j.block<2, 3>(2 * i, 3) = dp;
    }
  }

  RigidTransform plus(const RigidTransform& pose, const Eigen::Matrix<double, 6, 1>& delta) const {
    const Eigen::Matrix3d dr = exp_so3(delta.head<3>());
    return {dr * pose.rotation(), dr * pose.translation() + delta.tail<3>()};
  }
};

}  // namespace

PnpResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics) {
  const auto m = static_cast<Eigen::Index>(correspondences.size());
  if (m < 6) {
    throw Error(ErrorCode::DegenerateConfiguration,
                fmt::format("solve_pnp: need at least 6 correspondences, got {}", m));
  }
  const CameraModel camera(intrinsics, RigidTransform::identity());

  Point3 centroid = Point3::Zero();
  for (const auto& c : correspondences) {
    require_finite(c.world, "solve_pnp");
    if (!c.pixel.allFinite()) throw Error(ErrorCode::NonFinite, "solve_pnp: non-finite pixel");
    centroid += c.world;
  }
  centroid /= static_cast<double>(m);

  Eigen::MatrixXd centered(m, 3);
  for (Eigen::Index i = 0; i < m; ++i) centered.row(i) = (correspondences[i].world - centroid).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> spread(centered);
  const auto sv = spread.singularValues();
  if (sv(0) <= 1e-12 || sv(2) < 1e-3 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "solve_pnp: world points are (nearly) coplanar");
  }
  const double scale = std::sqrt(3.0) / (centered.rowwise().norm().mean());

  // DLT on conditioned coordinates: P~ acts on (X - c) * scale.
  Eigen::MatrixXd a(2 * m, 12);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Vector2d n = camera.undistort(correspondences[i].pixel);
    Eigen::Vector4d xh;
    xh << (correspondences[i].world - centroid) * scale, 1.0;
    a.row(2 * i) << xh.transpose(), Eigen::RowVector4d::Zero(), -n.x() * xh.transpose();
    a.row(2 * i + 1) << Eigen::RowVector4d::Zero(), xh.transpose(), -n.y() * xh.transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd v = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> conditioned;
  conditioned << v.segment<4>(0).transpose(), v.segment<4>(4).transpose(), v.segment<4>(8).transpose();

  Eigen::Matrix4d condition = Eigen::Matrix4d::Identity();
  condition.topLeftCorner<3, 3>() *= scale;
  condition.topRightCorner<3, 1>() = -scale * centroid;
  Eigen::Matrix<double, 3, 4> p = conditioned * condition;

  Eigen::Matrix3d left = p.leftCols<3>();
  if (left.determinant() < 0.0) {
    p = -p;
    left = -left;
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> polar(left, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = polar.matrixU() * polar.matrixV().transpose();
  if (r.determinant() < 0.0) throw Error(ErrorCode::DegenerateConfiguration, "solve_pnp: DLT produced a reflection");
  const double lambda = polar.singularValues().mean();
  if (!(lambda > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "solve_pnp: degenerate DLT solution");
  const RigidTransform initial(r, p.col(3) / lambda);

  const PoseProblem problem{correspondences, camera};
  detail::LmSettings settings;
  settings.max_iterations = 100;
  const RigidTransform refined = detail::levenberg_marquardt<6>(problem, initial, settings);

  // Re-orthonormalize against accumulated round-off.
  const Eigen::JacobiSVD<Eigen::Matrix3d> clean(refined.rotation(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const RigidTransform pose(clean.matrixU() * clean.matrixV().transpose(), refined.translation());

  double sum_sq = 0.0;
  for (const auto& c : correspondences) {
    const Point3 pc = pose.apply(c.world);
    if (pc.z() <= 0.0) throw Error(ErrorCode::DegenerateConfiguration, "solve_pnp: point behind recovered camera");
    sum_sq += (camera.project_camera_frame(pc) - c.pixel).squaredNorm();
  }
  return {pose, std::sqrt(sum_sq / static_cast<double>(m))};
}

}  // namespace keyprop
