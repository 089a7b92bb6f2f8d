#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace octcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid motion in SE(3). Translation is in millimeters.
///
/// Naming follows the frame chain used throughout the project: a transform
/// called `a_to_b` maps coordinates expressed in frame `a` into frame `b`.
/// Composition `a * b` applies `b` first.
class RigidTransform {
 public:
  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);
  /// Rotation given as axis * angle (radians).
  static RigidTransform from_rotation_vector(const Vec3& rotvec, const Vec3& t = Vec3::Zero());
  /// Homogeneous 4x4 given as 16 row-major numbers (the on-disk layout).
  static RigidTransform from_row_major(std::span<const double> values);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Mat4 matrix() const;
  std::array<double, 16> row_major() const;
  Eigen::Quaterniond quaternion() const;

  /// ||R^T R - I||_F < tol and |det R - 1| < tol.
  bool is_valid(double tol = 1e-9) const;
  double orthonormality_error() const;
  RigidTransform orthonormalized() const;

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
Vec3 apply(const RigidTransform& t, const Vec3& p);

Mat3 skew(const Vec3& v);
Mat3 rotation_from_vector(const Vec3& rotvec);
Vec3 rotation_to_vector(const Mat3& r);
/// Nearest rotation in the Frobenius sense.
Mat3 project_to_rotation(const Mat3& m);

/// Geodesic angle of a rotation, radians in [0, pi].
double rotation_angle(const Mat3& r);
double rotation_error(const RigidTransform& a, const RigidTransform& b);
double translation_error(const RigidTransform& a, const RigidTransform& b);

/// Roll, pitch, yaw in degrees; intrinsic Z-Y'-X'' (R = Rz(yaw) Ry(pitch) Rx(roll)).
struct EulerRPY {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

Mat3 rotation_from_rpy(const EulerRPY& e);
/// Principal solution with pitch in [-90, 90]. Throws GimbalLock when
/// |pitch| is within 1e-6 deg of 90.
EulerRPY rpy_from_rotation(const Mat3& r);
/// The other angle triple describing the same rotation:
/// (roll + 180, 180 - pitch, yaw + 180), wrapped to (-180, 180].
EulerRPY alternate_rpy(const EulerRPY& e);
double wrap_degrees(double angle);

struct RigidFit {
  RigidTransform transform;
  double rms = 0.0;
};

/// Closed-form least-squares rigid fit dst ~ R src + t (no scale).
/// Throws LengthMismatch or DegenerateGeometry.
RigidFit umeyama_fit(std::span<const Vec3> src, std::span<const Vec3> dst);

/// Root-mean-square of ||dst_i - T src_i||.
double rms_residual(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace octcal
