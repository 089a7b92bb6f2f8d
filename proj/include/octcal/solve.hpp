#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "octcal/geom.hpp"

namespace octcal {

/// Pinhole camera with radial-tangential distortion (k1, k2, p1, p2, k3).
struct CameraIntrinsics {
  double fx = 430.0;
  double fy = 430.0;
  double cx = 424.0;
  double cy = 240.0;
  std::array<double, 5> distortion{-0.02, 0.005, 0.0005, -0.0003, 0.0};
  int width = 848;
  int height = 480;

  /// Throws InvalidInput when focal lengths are not positive or the principal
  /// point lies outside the image.
  void validate() const;
};

/// Normalized image coordinates -> distorted normalized coordinates.
Vec2 distort_normalized(const CameraIntrinsics& k, const Vec2& xn);
/// Pixel -> undistorted normalized coordinates (10 fixed-point iterations).
Vec2 undistort_to_normalized(const CameraIntrinsics& k, const Vec2& px);
/// Camera-frame point -> distorted pixel.
Vec2 project_point(const CameraIntrinsics& k, const Vec3& p_camera);

struct PoseEstimate {
  RigidTransform pose;           // board (CW) -> camera
  double mean_residual_px = 0.0; // on undistorted pixels
  int iterations = 0;
  std::vector<double> objective_history;  // sum of squared residuals per accepted step
};

/// Planar PnP: normalized DLT homography, decomposition, then damped
/// Gauss-Newton on the pixel reprojection error. Throws
/// DegenerateConfiguration (< 4 points, collinear or non-planar points) and
/// NonConvergence.
PoseEstimate pnp_planar(std::span<const Vec3> object_cw, std::span<const Vec2> image_px, const CameraIntrinsics& k);

/// Board points -> probe frame; thin wrapper over umeyama_fit.
RigidFit register_3d3d(std::span<const Vec3> object_cw, std::span<const Vec3> measured_o);

/// One calibration pose: where the robot says the gripper is, and where the
/// sensor saw the board.
struct PosePair {
  RigidTransform robot_pose;   // gripper -> robot world
  RigidTransform sensor_pose;  // board (CW) -> sensor
};

struct HandEyeResult {
  RigidTransform sensor_to_gripper;
  int motion_count = 0;
  double translation_condition = 0.0;  // smallest / largest singular value
  std::vector<std::string> warnings;
};

/// Index pairs used as relative motions: consecutive poses plus stride 5.
std::vector<std::array<int, 2>> motion_pairs(int pose_count);

/// Tsai-Lenz AX = XB. Throws InsufficientMotion when fewer than 3 poses are
/// given or all motion axes lie within 5 degrees of each other.
HandEyeResult hand_eye_tsai_lenz(std::span<const PosePair> pairs);

struct MotionResidual {
  int i = 0;
  int k = 0;
  double rotation_deg = 0.0;
  double translation_mm = 0.0;
};

struct PairResidual {
  int index = 0;
  double rotation_deg = 0.0;    // RMS over all motions involving this pose
  double translation_mm = 0.0;
};

struct ResidualReport {
  std::vector<MotionResidual> motions;  // every i < k
  std::vector<PairResidual> pairs;
};

/// ||A X - X B|| split into angle and displacement for every pose pair.
ResidualReport residual_diagnostics(std::span<const PosePair> pairs, const RigidTransform& x);

}  // namespace octcal
