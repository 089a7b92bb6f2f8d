#include "octcal/solve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "octcal/error.hpp"

namespace octcal {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidInput, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidInput, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::InvalidInput, "principal point outside the image");
  }
}

Vec2 distort_normalized(const CameraIntrinsics& k, const Vec2& xn) {
  const auto& d = k.distortion;
  const double x = xn.x();
  const double y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (d[0] + r2 * (d[1] + r2 * d[4]));
  const double xd = x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x);
  const double yd = y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y;
  return {xd, yd};
}

Vec2 undistort_to_normalized(const CameraIntrinsics& k, const Vec2& px) {
  const Vec2 xd((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy);
  const auto& d = k.distortion;
  Vec2 x = xd;
  for (int it = 0; it < 10; ++it) {
    const double r2 = x.squaredNorm();
    const double radial = 1.0 + r2 * (d[0] + r2 * (d[1] + r2 * d[4]));
    const double dx = 2.0 * d[2] * x.x() * x.y() + d[3] * (r2 + 2.0 * x.x() * x.x());
    const double dy = d[2] * (r2 + 2.0 * x.y() * x.y()) + 2.0 * d[3] * x.x() * x.y();
    x = Vec2((xd.x() - dx) / radial, (xd.y() - dy) / radial);
  }
  return x;
}

Vec2 project_point(const CameraIntrinsics& k, const Vec3& p) {
  const Vec2 xd = distort_normalized(k, Vec2(p.x() / p.z(), p.y() / p.z()));
  return {k.fx * xd.x() + k.cx, k.fy * xd.y() + k.cy};
}

namespace {

/// Similarity that moves the centroid to 0 and the mean distance to sqrt(2).
Mat3 normalizing_transform(std::span<const Vec2> pts) {
  Vec2 c = Vec2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

Mat3 homography_dlt(std::span<const Vec2> src, std::span<const Vec2> dst) {
  const Mat3 ts = normalizing_transform(src);
  const Mat3 td = normalizing_transform(dst);
  const std::size_t n = src.size();
  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = ts * Vec3(src[i].x(), src[i].y(), 1.0);
    const Vec3 q = td * Vec3(dst[i].x(), dst[i].y(), 1.0);
    const double x = p.x() / p.z();
    const double y = p.y() / p.z();
    const double u = q.x() / q.z();
    const double v = q.y() / q.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return td.inverse() * hn * ts;
}

struct Reprojection {
  double cost = 0.0;
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian;
};

Reprojection evaluate(const RigidTransform& pose, std::span<const Vec3> obj, std::span<const Vec2> target,
                      const CameraIntrinsics& k, bool with_jacobian) {
  const std::size_t n = obj.size();
  Reprojection r;
  r.residual.resize(2 * n);
  if (with_jacobian) r.jacobian.resize(2 * n, 6);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 rp = pose.rotation() * obj[i];
    const Vec3 pc = rp + pose.translation();
    const double iz = 1.0 / pc.z();
    r.residual(2 * i) = k.fx * pc.x() * iz + k.cx - target[i].x();
    r.residual(2 * i + 1) = k.fy * pc.y() * iz + k.cy - target[i].y();
    if (with_jacobian) {
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * pc.x() * iz * iz, 0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      r.jacobian.block<2, 3>(2 * i, 0) = -dproj * skew(rp);
      r.jacobian.block<2, 3>(2 * i, 3) = dproj;
    }
  }
  r.cost = r.residual.squaredNorm();
  return r;
}

}  // namespace

PoseEstimate pnp_planar(std::span<const Vec3> object_cw, std::span<const Vec2> image_px, const CameraIntrinsics& k) {
  if (object_cw.size() != image_px.size()) {
    throw Error(ErrorCode::LengthMismatch, "object and image point counts differ");
  }
  const std::size_t n = object_cw.size();
  if (n < 4) throw Error(ErrorCode::DegenerateConfiguration, "planar PnP needs at least 4 points");
  std::vector<Vec2> plane(n);
  Vec2 mean = Vec2::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(object_cw[i].z()) > 1e-9) {
      throw Error(ErrorCode::DegenerateConfiguration, "object points must lie on z = 0");
    }
    plane[i] = object_cw[i].head<2>();
    mean += plane[i];
  }
  mean /= static_cast<double>(n);
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : plane) cov += (p - mean) * (p - mean).transpose();
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues();
  if (!(ev(1) > 0.0) || ev(0) <= 1e-10 * ev(1)) {
    throw Error(ErrorCode::DegenerateConfiguration, "object points are collinear");
  }

  std::vector<Vec2> normalized(n);
  std::vector<Vec2> ideal_px(n);
  for (std::size_t i = 0; i < n; ++i) {
    normalized[i] = undistort_to_normalized(k, image_px[i]);
    ideal_px[i] = Vec2(k.fx * normalized[i].x() + k.cx, k.fy * normalized[i].y() + k.cy);
  }

  const Mat3 h = homography_dlt(plane, normalized);
  const double scale = 2.0 / (h.col(0).norm() + h.col(1).norm());
  Vec3 r1 = scale * h.col(0);
  Vec3 r2 = scale * h.col(1);
  Vec3 t = scale * h.col(2);
  if (t.z() < 0.0) {
    r1 = -r1;
    r2 = -r2;
    t = -t;
  }
  Mat3 r0;
  r0.col(0) = r1;
  r0.col(1) = r2;
  r0.col(2) = r1.cross(r2);
  RigidTransform pose(project_to_rotation(r0), t);

  PoseEstimate est;
  Reprojection cur = evaluate(pose, object_cw, ideal_px, k, true);
  if (!std::isfinite(cur.cost)) throw Error(ErrorCode::NonConvergence, "initial pose is not finite");
  est.objective_history.push_back(cur.cost);
  double lambda = 1e-3;
  constexpr int kMaxIterations = 100;
  bool converged = false;
  int it = 0;
  for (; it < kMaxIterations; ++it) {
    const Eigen::Matrix<double, 6, 6> jtj = cur.jacobian.transpose() * cur.jacobian;
    const Eigen::Matrix<double, 6, 1> jtr = cur.jacobian.transpose() * cur.residual;
    if (cur.cost < 1e-24 || jtr.norm() < 1e-14) {
      converged = true;
      break;
    }
    bool accepted = false;
    double step_norm = 0.0;
    while (lambda < 1e16) {
      Eigen::Matrix<double, 6, 6> damped = jtj;
      for (int d = 0; d < 6; ++d) damped(d, d) += lambda * std::max(jtj(d, d), 1e-12);
      const Eigen::Matrix<double, 6, 1> step = -damped.ldlt().solve(jtr);
      const RigidTransform cand(rotation_from_vector(step.head<3>()) * pose.rotation(),
                                pose.translation() + step.tail<3>());
      const Reprojection next = evaluate(cand, object_cw, ideal_px, k, true);
      if (std::isfinite(next.cost) && next.cost <= cur.cost) {
        const double reduction = cur.cost - next.cost;
        pose = cand;
        step_norm = step.norm();
        converged = reduction <= 1e-15 * cur.cost;
        cur = next;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent direction left at any damping: already at the minimum.
      converged = true;
      break;
    }
    est.objective_history.push_back(cur.cost);
    if (converged || step_norm < 1e-12) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) throw Error(ErrorCode::NonConvergence, "PnP refinement exceeded 100 iterations");

  est.pose = RigidTransform(project_to_rotation(pose.rotation()), pose.translation());
  est.iterations = it;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += cur.residual.segment<2>(2 * i).norm();
  est.mean_residual_px = sum / static_cast<double>(n);
  return est;
}

RigidFit register_3d3d(std::span<const Vec3> object_cw, std::span<const Vec3> measured_o) {
  return umeyama_fit(object_cw, measured_o);
}

std::vector<std::array<int, 2>> motion_pairs(int pose_count) {
  std::vector<std::array<int, 2>> out;
  for (int i = 0; i + 1 < pose_count; ++i) out.push_back({i, i + 1});
  for (int i = 0; i + 5 < pose_count; ++i) out.push_back({i, i + 5});
  return out;
}

namespace {

struct Motion {
  RigidTransform a;  // gripper motion
  RigidTransform b;  // sensor motion
};

Motion relative_motion(const PosePair& pi, const PosePair& pk) {
  return {pi.robot_pose.inverse() * pk.robot_pose, pi.sensor_pose * pk.sensor_pose.inverse()};
}

Vec3 modified_rodrigues(const Mat3& r) {
  const Vec3 v = rotation_to_vector(r);
  const double angle = v.norm();
  if (angle < 1e-300) return Vec3::Zero();
  return 2.0 * std::sin(0.5 * angle) * (v / angle);
}

}  // namespace

HandEyeResult hand_eye_tsai_lenz(std::span<const PosePair> pairs) {
  if (pairs.size() < 3) throw Error(ErrorCode::InsufficientMotion, "need at least 3 pose pairs");
  std::vector<Motion> motions;
  for (const auto& [i, k] : motion_pairs(static_cast<int>(pairs.size()))) {
    motions.push_back(relative_motion(pairs[i], pairs[k]));
  }

  std::vector<Vec3> axes;
  for (const auto& m : motions) {
    const Vec3 v = rotation_to_vector(m.a.rotation());
    if (v.norm() > 1e-6) axes.push_back(v.normalized());
  }
  double widest = 0.0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      const double c = std::clamp(std::abs(axes[i].dot(axes[j])), 0.0, 1.0);
      widest = std::max(widest, std::acos(c));
    }
  }
  if (axes.size() < 2 || widest <= deg2rad(5.0)) {
    throw Error(ErrorCode::InsufficientMotion, "motion rotation axes are (nearly) parallel");
  }

  const std::size_t m = motions.size();
  Eigen::MatrixXd a(3 * m, 3);
  Eigen::VectorXd b(3 * m);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 pa = modified_rodrigues(motions[i].a.rotation());
    const Vec3 pb = modified_rodrigues(motions[i].b.rotation());
    a.block<3, 3>(3 * i, 0) = skew(pa + pb);
    b.segment<3>(3 * i) = pb - pa;
  }
  const Vec3 xp = a.colPivHouseholderQr().solve(b);
  const Vec3 px = 2.0 * xp / std::sqrt(1.0 + xp.squaredNorm());
  const double p2 = px.squaredNorm();
  const Mat3 rx = project_to_rotation((1.0 - 0.5 * p2) * Mat3::Identity() +
                                      0.5 * (px * px.transpose() + std::sqrt(std::max(0.0, 4.0 - p2)) * skew(px)));

  Eigen::MatrixXd c(3 * m, 3);
  Eigen::VectorXd d(3 * m);
  for (std::size_t i = 0; i < m; ++i) {
    c.block<3, 3>(3 * i, 0) = motions[i].a.rotation() - Mat3::Identity();
    d.segment<3>(3 * i) = rx * motions[i].b.translation() - motions[i].a.translation();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec3 tx = svd.solve(d);

  HandEyeResult out;
  out.sensor_to_gripper = RigidTransform(rx, tx);
  out.motion_count = static_cast<int>(m);
  const auto& sv = svd.singularValues();
  out.translation_condition = sv(0) > 0.0 ? sv(2) / sv(0) : 0.0;
  if (out.translation_condition < 1e-6) {
    out.warnings.push_back("translation system is ill-conditioned (sigma_min/sigma_max = " +
                           std::to_string(out.translation_condition) + ")");
  }
  return out;
}

ResidualReport residual_diagnostics(std::span<const PosePair> pairs, const RigidTransform& x) {
  ResidualReport report;
  const int n = static_cast<int>(pairs.size());
  std::vector<double> rot_sq(n, 0.0);
  std::vector<double> trans_sq(n, 0.0);
  std::vector<int> count(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const Motion mo = relative_motion(pairs[i], pairs[k]);
      const RigidTransform lhs = mo.a * x;
      const RigidTransform rhs = x * mo.b;
      MotionResidual r;
      r.i = i;
      r.k = k;
      r.rotation_deg = rad2deg(rotation_angle(lhs.rotation().transpose() * rhs.rotation()));
      r.translation_mm = (lhs.translation() - rhs.translation()).norm();
      report.motions.push_back(r);
      for (int idx : {i, k}) {
        rot_sq[idx] += r.rotation_deg * r.rotation_deg;
        trans_sq[idx] += r.translation_mm * r.translation_mm;
        ++count[idx];
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    PairResidual p;
    p.index = i;
    if (count[i] > 0) {
      p.rotation_deg = std::sqrt(rot_sq[i] / count[i]);
      p.translation_mm = std::sqrt(trans_sq[i] / count[i]);
    }
    report.pairs.push_back(p);
  }
  return report;
}

}  // namespace octcal
