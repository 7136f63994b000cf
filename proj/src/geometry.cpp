#include "priorvo/geometry.hpp"

#include "priorvo/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace priorvo {

PinholeCamera PinholeCamera::make(double fx, double fy, double cx, double cy, int width, int height) {
  PinholeCamera cam{fx, fy, cx, cy, width, height};
  cam.validate();
  return cam;
}

void PinholeCamera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractViolation("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ContractViolation("camera image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw ContractViolation("principal point outside the image");
}

IntrinsicsFile read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intrinsics file " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream ss(line);
  IntrinsicsFile out;
  PinholeCamera& c = out.camera;
  if (!(ss >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height >> out.fps))
    throw ParseError("expected `fx fy cx cy width height fps` in " + path.string(), 1);
  if (!(out.fps > 0.0)) throw ParseError("fps must be positive in " + path.string(), 1);
  c.validate();
  return out;
}

void write_intrinsics(const IntrinsicsFile& intrinsics, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write intrinsics file " + path.string());
  const PinholeCamera& c = intrinsics.camera;
  out << std::setprecision(17) << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width
      << ' ' << c.height << ' ' << intrinsics.fps << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Bearing::Bearing(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("bearing from zero or non-finite vector");
  v_ = v / n;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-10) return Mat3::Identity() + skew(omega);
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

Mat3 orthonormalize(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  return q.toRotationMatrix();
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

RigidTransform::RigidTransform(const Eigen::Quaterniond& q, const Vec3& translation)
    : rotation_(q.normalized().toRotationMatrix()), translation_(translation) {}

RigidTransform RigidTransform::exp(const Vec6& twist) {
  const Vec3 upsilon = twist.head<3>();
  const Vec3 omega = twist.tail<3>();
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  Mat3 V;
  if (theta < 1e-8) {
    V = Mat3::Identity() + 0.5 * W;
  } else {
    const double t2 = theta * theta;
    V = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * W + (theta - std::sin(theta)) / (t2 * theta) * W * W;
  }
  return {so3_exp(omega), V * upsilon};
}

Vec6 RigidTransform::log() const {
  const Vec3 omega = so3_log(rotation_);
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  Mat3 V_inv;
  if (theta < 1e-8) {
    V_inv = Mat3::Identity() - 0.5 * W;
  } else {
    const double half = 0.5 * theta;
    V_inv = Mat3::Identity() - 0.5 * W +
            (1.0 - half * std::cos(half) / std::sin(half)) / (theta * theta) * W * W;
  }
  Vec6 out;
  out.head<3>() = V_inv * translation_;
  out.tail<3>() = omega;
  return out;
}

Eigen::Quaterniond RigidTransform::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  return q;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out(rotation_.transpose(), -(rotation_.transpose() * translation_));
  out.chain_ = chain_;
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  out.chain_ = chain_ + rhs.chain_ + 1;
  if (out.chain_ > kReorthonormalizeAfter) {
    out.rotation_ = orthonormalize(out.rotation_);
    out.chain_ = 0;
  }
  return out;
}

double RigidTransform::orthonormality_error() const {
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return so3_log(a.rotation().transpose() * b.rotation()).norm();
}

double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

Vec2 project(const PinholeCamera& cam, const Vec3& point_cam) {
  if (!(point_cam.z() > 0.0)) throw DomainError("projection of a point with non-positive depth");
  return project_unchecked(cam, point_cam);
}

Bearing back_project(const PinholeCamera& cam, const Vec2& pixel) {
  return Bearing(Vec3((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0));
}

std::optional<double> triangulate_inverse_depth(const Bearing& ref_bearing, const Bearing& cur_bearing,
                                                const RigidTransform& T_cur_from_ref,
                                                const TriangulationLimits& limits) {
  // Both rays expressed in the reference frame: ref ray through the origin, cur ray
  // through the current camera centre.
  const RigidTransform T_ref_from_cur = T_cur_from_ref.inverse();
  const Vec3& f1 = ref_bearing.vec();
  const Vec3 f2 = T_ref_from_cur.rotation() * cur_bearing.vec();
  const Vec3& c = T_ref_from_cur.translation();

  const double angle = std::atan2(f1.cross(f2).norm(), f1.dot(f2));
  if (!(angle > limits.min_angle_rad)) return std::nullopt;

  // Minimize |l1 f1 - (c + l2 f2)|^2.
  const double b = f1.dot(f2);
  const double d1 = f1.dot(c);
  const double d2 = f2.dot(c);
  const double denom = 1.0 - b * b;
  if (!(denom > 0.0)) return std::nullopt;
  const double l1 = (d1 - b * d2) / denom;
  const double l2 = (b * d1 - d2) / denom;
  if (!(l1 > 0.0) || !(l2 > 0.0)) return std::nullopt;
  const double z = l1 * f1.z();
  if (!(z > 0.0) || !std::isfinite(z)) return std::nullopt;
  return 1.0 / z;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const PinholeCamera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0.0, -cam.fx * p.x() * iz2, 0.0, cam.fy * iz, -cam.fy * p.y() * iz2;
  return J;
}

}  // namespace priorvo
