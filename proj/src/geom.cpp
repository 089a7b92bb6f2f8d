#include "octcal/geom.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "octcal/error.hpp"

namespace octcal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::GimbalLock: return "GimbalLock";
    case ErrorCode::UnknownMarker: return "UnknownMarker";
    case ErrorCode::VolumeTooSmall: return "VolumeTooSmall";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::BoardNotFound: return "BoardNotFound";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InsufficientMotion: return "InsufficientMotion";
    case ErrorCode::UnreachableTarget: return "UnreachableTarget";
    case ErrorCode::BoardOutOfView: return "BoardOutOfView";
    case ErrorCode::PlaneOutOfFov: return "PlaneOutOfFov";
    case ErrorCode::SphereOutOfFov: return "SphereOutOfFov";
    case ErrorCode::NoCommonMarkers: return "NoCommonMarkers";
    case ErrorCode::NoHeldOutMarkers: return "NoHeldOutMarkers";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::EmptySection: return "EmptySection";
    case ErrorCode::MalformedRun: return "MalformedRun";
    case ErrorCode::MissingData: return "MissingData";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return {q.normalized().toRotationMatrix(), t};
}

RigidTransform RigidTransform::from_rotation_vector(const Vec3& rotvec, const Vec3& t) {
  return {rotation_from_vector(rotvec), t};
}

RigidTransform RigidTransform::from_row_major(std::span<const double> values) {
  if (values.size() != 16) {
    throw Error(ErrorCode::InvalidInput, "transform needs 16 values");
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = values[r * 4 + c];
  }
  return from_matrix(m);
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

std::array<double, 16> RigidTransform::row_major() const {
  const Mat4 m = matrix();
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out[r * 4 + c] = m(r, c);
  }
  return out;
}

Eigen::Quaterniond RigidTransform::quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

double RigidTransform::orthonormality_error() const {
  return (rotation_.transpose() * rotation_ - Mat3::Identity()).norm();
}

bool RigidTransform::is_valid(double tol) const {
  return translation_.allFinite() && rotation_.allFinite() && orthonormality_error() < tol &&
         std::abs(rotation_.determinant() - 1.0) < tol;
}

RigidTransform RigidTransform::orthonormalized() const {
  return {project_to_rotation(rotation_), translation_};
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out(rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_);
  // Long products drift off SO(3); pull back once the drift is measurable.
  if (out.orthonormality_error() > 1e-9) out = out.orthonormalized();
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }
RigidTransform invert(const RigidTransform& t) { return t.inverse(); }
Vec3 apply(const RigidTransform& t, const Vec3& p) { return t * p; }

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Mat3 rotation_from_vector(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

Vec3 rotation_to_vector(const Mat3& r) {
  const Eigen::Quaterniond q = Eigen::Quaterniond(r).normalized();
  const double vnorm = q.vec().norm();
  if (vnorm < 1e-300) return Vec3::Zero();
  double angle = 2.0 * std::atan2(vnorm, std::abs(q.w()));
  const double sign = q.w() < 0.0 ? -1.0 : 1.0;
  return sign * angle * q.vec() / vnorm;
}

Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

double rotation_angle(const Mat3& r) {
  // The quaternion route keeps full precision near zero, unlike acos(trace).
  const Eigen::Quaterniond q = Eigen::Quaterniond(r).normalized();
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation());
}

double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation() - b.translation()).norm();
}

double wrap_degrees(double angle) {
  double a = std::fmod(angle, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

Mat3 rotation_from_rpy(const EulerRPY& e) {
  return (Eigen::AngleAxisd(deg2rad(e.yaw), Vec3::UnitZ()) *
          Eigen::AngleAxisd(deg2rad(e.pitch), Vec3::UnitY()) *
          Eigen::AngleAxisd(deg2rad(e.roll), Vec3::UnitX()))
      .toRotationMatrix();
}

EulerRPY rpy_from_rotation(const Mat3& r) {
  const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  const double cp = std::hypot(r(0, 0), r(1, 0));
  const double pitch = std::atan2(sp, cp);
  if (std::abs(rad2deg(pitch)) > 90.0 - 1e-6) {
    throw Error(ErrorCode::GimbalLock, "pitch within 1e-6 deg of +-90");
  }
  EulerRPY e;
  e.pitch = rad2deg(pitch);
  e.roll = rad2deg(std::atan2(r(2, 1), r(2, 2)));
  e.yaw = rad2deg(std::atan2(r(1, 0), r(0, 0)));
  return e;
}

EulerRPY alternate_rpy(const EulerRPY& e) {
  return {wrap_degrees(e.roll + 180.0), wrap_degrees(180.0 - e.pitch), wrap_degrees(e.yaw + 180.0)};
}

namespace {

void check_spread(std::span<const Vec3> pts, const char* which) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (ev(2) <= 1e-24 || ev(1) <= 1e-14 * ev(2)) {
    throw Error(ErrorCode::DegenerateGeometry, std::string(which) + " points are coincident or collinear");
  }
}

}  // namespace

RigidFit umeyama_fit(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::LengthMismatch, "source and destination sizes differ");
  }
  if (src.size() < 3) {
    throw Error(ErrorCode::DegenerateGeometry, "need at least 3 correspondences");
  }
  check_spread(src, "source");
  check_spread(dst, "destination");

  const double n = static_cast<double>(src.size());
  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= n;
  mu_dst /= n;

  Mat3 cross = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cross += (dst[i] - mu_dst) * (src[i] - mu_src).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 rot = svd.matrixU() * d * svd.matrixV().transpose();

  RigidFit fit;
  fit.transform = RigidTransform(rot, mu_dst - rot * mu_src);
  fit.rms = rms_residual(fit.transform, src, dst);
  return fit;
}

double rms_residual(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw Error(ErrorCode::LengthMismatch, "source and destination sizes differ");
  }
  if (src.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (dst[i] - t * src[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(src.size()));
}

}  // namespace octcal
