#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "octcal/board.hpp"
#include "octcal/geom.hpp"
#include "octcal/image.hpp"
#include "octcal/solve.hpp"
#include "octcal/volume.hpp"

namespace octcal {

/// Seeded generator for one named substream. Streams are keyed by
/// (seed, name, index) so adding observations never reshuffles earlier ones.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

  double normal(double sigma = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  Vec3 unit_vector();
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct NoiseConfig {
  double corner_px_sigma = 0.2;
  double oct_speckle_sigma = 0.05;  // multiplicative on the surface signal
  double background_max = 0.1;      // additive, uniform in [0, background_max]
  double robot_trans_sigma = 0.05;  // mm
  double robot_rot_sigma = 0.05;    // deg
  double camera_image_sigma = 0.02; // rendered camera images only

  static NoiseConfig zero() { return {0.0, 0.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct DropoutConfig {
  double cos_exponent = 2.0;
  double cutoff_deg = 55.0;
};

enum class SurfaceKind { Plane, Sphere };

struct SurfaceModel {
  SurfaceKind kind = SurfaceKind::Plane;
  Vec3 center_rw{450.0, 200.0, -50.0};
  double radius = 50.0;
};

struct PoseSamplingConfig {
  double camera_distance_min = 140.0;  // mm, camera center to board target point
  double camera_distance_max = 170.0;
  double camera_tilt_max_deg = 25.0;
  double camera_roll_max_deg = 30.0;
  double camera_target_jitter = 10.0;  // mm
  double image_margin_px = 10.0;
  double oct_lateral_jitter = 0.5;     // mm
  double oct_depth_jitter = 0.1;       // mm
  double oct_tilt_max_deg = 12.0;
  double oct_depth_check_margin = 1.0; // mm beyond the marker corners kept inside the depth window
  double oct_yaw_max_deg = 60.0;
  double oct_corner_margin_px = 8.0;   // marker corners stay this far inside the en-face image
  int max_attempts = 2000;
};

/// Parameters of the sphere scanning comparison.
struct ScanSettings {
  double standoff = 1.33;        // mm from probe to surface along the depth axis
  double alpha_min_deg = 10.0;
  double alpha_max_deg = 70.0;
  int alpha_steps = 7;
  double beta_min_deg = -20.0;
  double beta_max_deg = 20.0;
  int beta_steps = 5;
  double xy_step = 8.0;          // mm, translation raster
  double coverage_bin_mm = 1.0;
};

/// Ground truth and noise model of one simulated setup.
struct ScenarioConfig {
  std::string name = "default";
  RigidTransform true_h_cg;      // camera -> gripper
  RigidTransform true_h_og;      // probe -> gripper
  RigidTransform board_pose_rw;  // board (CW) -> robot world
  CameraIntrinsics intrinsics;
  VolumeDims dims;
  VoxelSpacing spacing;
  double axial_sigma_voxels = 2.0;
  double min_intensity = 0.3;
  NoiseConfig noise;
  DropoutConfig dropout;
  SurfaceModel surface;
  PoseSamplingConfig sampling;
  ScanSettings scan;
  bool render_rgb = false;
  int center_marker = 17;
  std::uint64_t rng_seed = 7;
  BoardSpec board = BoardSpec::standard();

  static ScenarioConfig defaults();
  /// Throws InvalidInput.
  void validate() const;
};

struct PoseTarget {
  enum class Kind { CameraBoard, OctMarker };
  Kind kind = Kind::CameraBoard;
  int marker_id = 17;
  bool common_axis = false;  // every pose rotates about one fixed axis

  static PoseTarget camera() { return {Kind::CameraBoard, 17, false}; }
  static PoseTarget oct(int marker) { return {Kind::OctMarker, marker, false}; }
};

/// Sensor pose (board -> sensor) implied by a gripper pose under the true chain.
RigidTransform true_camera_pose(const ScenarioConfig& cfg, const RigidTransform& robot_pose);
RigidTransform true_probe_pose(const ScenarioConfig& cfg, const RigidTransform& robot_pose);
/// Gripper pose that puts a sensor with mounting `sensor_to_gripper` at `sensor_pose`.
RigidTransform robot_pose_for(const RigidTransform& board_pose_rw, const RigidTransform& sensor_to_gripper,
                              const RigidTransform& sensor_pose);

/// True gripper poses (G -> RW) that keep the target in view. Deterministic in
/// (seed, stream). Throws UnreachableTarget.
std::vector<RigidTransform> sample_calibration_poses(const ScenarioConfig& cfg, int n, const PoseTarget& target,
                                                     std::string_view stream = "calib");

/// Right-multiplies a random small motion drawn from the robot noise model.
RigidTransform perturb_robot_pose(const ScenarioConfig& cfg, const RigidTransform& pose, Rng& rng);

struct CameraObservation {
  std::vector<int> corner_ids;  // checker corner indices
  std::vector<Vec2> px;
};

/// Projects the checker corners through the true chain, adds pixel noise and
/// drops points outside the image. Throws BoardOutOfView.
CameraObservation observe_camera(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng);

/// Grayscale camera view of the board (albedo, supersampled) with additive
/// Gaussian noise of `noise_sigma`.
Image render_camera_image(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng,
                          double noise_sigma = 0.0, int supersample = 2);

/// Telecentric OCT rendering of the board plane. Throws PlaneOutOfFov.
OctVolume render_oct_board(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng);

/// OCT rendering of the sphere phantom. Throws SphereOutOfFov unless
/// `allow_empty`.
OctVolume render_oct_sphere(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng,
                            bool allow_empty = false);

struct Observation {
  RigidTransform robot_pose_true;
  RigidTransform robot_pose_reported;
  std::optional<CameraObservation> camera_corners;
  std::optional<OctVolume> oct_volume;
};

}  // namespace octcal
