#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "octcal/sim.hpp"
#include "octcal/volume.hpp"

namespace octcal {

enum class ScanMode { Translation3d, Full6d };

std::string to_string(ScanMode mode);
/// "translation3d" or "full6d"; throws InvalidInput otherwise.
ScanMode parse_scan_mode(const std::string& s);

struct ScanPlan {
  ScanMode mode = ScanMode::Full6d;
  std::vector<RigidTransform> robot_poses;  // gripper -> RW, as commanded
  std::vector<RigidTransform> probe_poses;  // probe -> RW implied by the mounting used for planning
  double xy_step = 0.0;                     // translation raster only
  int alpha_steps = 0;                      // 6D grid only
  int beta_steps = 0;
};

/// Lateral center of the FOV at zero depth, probe frame.
Vec3 fov_axis_origin(const VolumeDims& dims, const VoxelSpacing& spacing);

/// Probe orientation looking straight down (-z in RW) with x kept along RW x.
Mat3 downward_probe_rotation();

/// Probe poses on an (alpha, beta) grid around the sphere center: the depth
/// axis through the lateral FOV center passes through `center` and the probe
/// origin sits at radius + standoff from it. Rotation is Ry(alpha) Rx(beta)
/// applied to the downward orientation.
ScanPlan plan_6d_sphere(const Vec3& center, double radius, double standoff, const ScanSettings& grid,
                        const RigidTransform& h_og, const VolumeDims& dims, const VoxelSpacing& spacing);

struct RasterBounds {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

/// Median surface depth (mm along the probe axis) seen from the given probe
/// pose, or nothing when no surface was detected.
using DepthServo = std::function<std::optional<double>(int index, const RigidTransform& probe_pose)>;

/// Serpentine raster at a fixed orientation. The FOV center of pose 0 sits at
/// `initial_height`; every later pose is raised or lowered so the depth the
/// servo reported for the previous pose lands at mid-depth. Without a reading
/// the previous height is kept. Throws InvalidInput when xy_step exceeds the
/// lateral FOV.
ScanPlan plan_translation_raster(const RasterBounds& bounds, double xy_step, const Mat3& probe_rotation,
                                 double initial_height, const RigidTransform& h_og, const VolumeDims& dims,
                                 const VoxelSpacing& spacing, const DepthServo& servo);

struct PointCloud {
  std::vector<Vec3> points_rw;
  std::vector<float> intensity;
  std::vector<int> source_volume;

  std::size_t size() const { return points_rw.size(); }
  bool empty() const { return points_rw.empty(); }
};

/// Surface points of every volume mapped by robot_pose * h_og, in order.
PointCloud stitch(const std::vector<OctVolume>& volumes, const RigidTransform& h_og, double min_intensity,
                  int threads = 0);
/// Single-volume form used while streaming.
void append_surface(PointCloud& cloud, const OctVolume& v, int index, const RigidTransform& h_og,
                    double min_intensity);

struct SphereFit {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  std::vector<double> residuals;  // ||p - center|| - radius
  double algebraic_rms = 0.0;     // residual RMS of the linear initialization
  int iterations = 0;

  double rms() const;
  double mean_abs_residual() const;
};

/// Linear algebraic fit, then Levenberg-Marquardt on the geometric distance
/// until the step is below 1e-10 mm. Throws DegenerateCloud (< 10 points or
/// coplanar) and NonConvergence.
SphereFit fit_sphere(const std::vector<Vec3>& points);

struct ProfilePoint {
  double u = 0.0;  // along the in-plane axis
  double v = 0.0;
};

/// Points within thickness / 2 of the plane, in plane coordinates sorted by u.
/// The u axis is `in_plane_hint` projected into the plane. Throws EmptySection.
std::vector<ProfilePoint> cross_section(const PointCloud& cloud, const Vec3& plane_point, const Vec3& plane_normal,
                                        double thickness, const Vec3& in_plane_hint = Vec3::UnitX());

/// Expected surface: the cap of a sphere given by polar ranges of
/// alpha (rotation about RW y) and beta (about RW x) of the outward normal
/// n = Ry(alpha) Rx(beta) z.
struct SphereCap {
  Vec3 center = Vec3::Zero();
  double radius = 50.0;
  double alpha_min_deg = 0.0;
  double alpha_max_deg = 0.0;
  double beta_min_deg = 0.0;
  double beta_max_deg = 0.0;
};

/// The cap imaged by a 6D plan including the half FOV around its extreme patches.
SphereCap cap_for_plan(const Vec3& center, double radius, const ScanSettings& grid, const VolumeDims& dims,
                       const VoxelSpacing& spacing);

struct CoverageReport {
  int bins = 0;              // cap cells of ~bin x bin mm
  int covered = 0;
  double coverage = 0.0;
  int dropout_bins = 0;           // empty cells that lay inside some volume's lateral FOV
  int dropout_above_cutoff = 0;   // of those, cells whose smallest incidence exceeds the cutoff
  int dropout_depth_clipped = 0;  // of those, cells outside every depth window that passed over them
  double dropout_above_cutoff_fraction = 0.0;
  double max_incidence_covered_deg = 0.0;
};

/// Occupancy of the expected cap. `probe_poses` (probe -> RW, true) decide
/// which empty cells count as dropouts rather than never imaged.
CoverageReport coverage_report(const PointCloud& cloud, const SphereCap& cap, double bin_mm,
                               const std::vector<RigidTransform>& probe_poses, const VolumeDims& dims,
                               const VoxelSpacing& spacing, double cutoff_deg);

struct ScanResult {
  ScanPlan plan;
  PointCloud cloud;
  std::vector<RigidTransform> reported_poses;
  std::vector<RigidTransform> true_probe_poses;
};

/// Plans, renders the sphere phantom at each pose (true chain), and stitches
/// with the reported robot poses and the given calibration. Volumes are
/// handed to `sink` in acquisition order before being dropped.
ScanResult run_scan(const ScenarioConfig& cfg, const RigidTransform& h_og, ScanMode mode, const std::string& stream,
                    int threads = 0, const std::function<void(int, const OctVolume&)>& sink = {});

}  // namespace octcal
