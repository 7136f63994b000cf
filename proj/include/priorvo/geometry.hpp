#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <filesystem>
#include <optional>

namespace priorvo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics. No distortion model.
struct PinholeCamera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws ContractViolation when the invariants do not hold.
  static PinholeCamera make(double fx, double fy, double cx, double cy, int width, int height);
  void validate() const;

  bool contains(const Vec2& px, double border = 0.0) const {
    return px.x() >= border && px.y() >= border && px.x() <= width - 1 - border &&
           px.y() <= height - 1 - border;
  }
};

/// Intrinsics text file: `fx fy cx cy width height fps` on one line.
struct IntrinsicsFile {
  PinholeCamera camera;
  double fps = 10.0;
};
IntrinsicsFile read_intrinsics(const std::filesystem::path& path);
void write_intrinsics(const IntrinsicsFile& intrinsics, const std::filesystem::path& path);

/// Unit direction in the camera frame.
class Bearing {
 public:
  /// Normalizes `v`. Throws DomainError for a zero vector.
  explicit Bearing(const Vec3& v);
  const Vec3& vec() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }

 private:
  Vec3 v_;
};

/// Rotation + translation. Composition re-orthonormalizes the rotation once a chain
/// of compositions grows past kReorthonormalizeAfter.
class RigidTransform {
 public:
  static constexpr std::uint32_t kReorthonormalizeAfter = 1000;

  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation);
  RigidTransform(const Eigen::Quaterniond& q, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  /// Exponential map; twist = (translation part, rotation part).
  static RigidTransform exp(const Vec6& twist);
  Vec6 log() const;

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Max deviation of R^T R from identity and |det R - 1|.
  double orthonormality_error() const;
  std::uint32_t chain_length() const { return chain_; }

 private:
  Mat3 rotation_;
  Vec3 translation_;
  std::uint32_t chain_ = 0;
};

Mat3 skew(const Vec3& v);
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);
Mat3 orthonormalize(const Mat3& rotation);

/// Rotation angle (rad) between two transforms' rotations and translation distance.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);
double translation_distance(const RigidTransform& a, const RigidTransform& b);

/// Throws DomainError when point_cam.z <= 0.
Vec2 project(const PinholeCamera& cam, const Vec3& point_cam);
/// Same as project without the depth check; for hot loops where z > 0 is already known.
inline Vec2 project_unchecked(const PinholeCamera& cam, const Vec3& p) {
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}
Bearing back_project(const PinholeCamera& cam, const Vec2& pixel);

/// Point in the host frame at inverse z-depth `rho` along `bearing`.
inline Vec3 point_from_inverse_depth(const Bearing& bearing, double rho) {
  return bearing.vec() / (bearing.z() * rho);
}

struct TriangulationLimits {
  double min_angle_rad = 1e-6;
};

/// Midpoint triangulation. Returns the inverse z-depth (in the reference frame) of the
/// closest point on the reference ray; nullopt for parallel rays or points behind either camera.
std::optional<double> triangulate_inverse_depth(const Bearing& ref_bearing, const Bearing& cur_bearing,
                                                const RigidTransform& T_cur_from_ref,
                                                const TriangulationLimits& limits = {});

/// d(pixel)/d(point_cam), 2x3.
Eigen::Matrix<double, 2, 3> projection_jacobian(const PinholeCamera& cam, const Vec3& p);

}  // namespace priorvo
