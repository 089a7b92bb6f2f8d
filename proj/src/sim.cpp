#include "octcal/sim.hpp"

#include <algorithm>
#include <cmath>

#include "octcal/error.hpp"

namespace octcal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

double frac(double x) { return x - std::floor(x); }

Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

/// Adds a truncated Gaussian depth profile to one A-scan.
void deposit_profile(std::vector<float>& buf, const VolumeDims& dims, int x, int y, double depth_voxels,
                     double amplitude, double sigma_voxels) {
  if (amplitude <= 0.0) return;
  const double reach = 4.0 * sigma_voxels;
  const int lo = std::max(0, static_cast<int>(std::ceil(depth_voxels - reach)));
  const int hi = std::min(dims.z - 1, static_cast<int>(std::floor(depth_voxels + reach)));
  const double inv = 1.0 / (2.0 * sigma_voxels * sigma_voxels);
  for (int z = lo; z <= hi; ++z) {
    const double d = z - depth_voxels;
    buf[(static_cast<std::size_t>(z) * dims.x + x) * dims.y + y] += static_cast<float>(amplitude * std::exp(-d * d * inv));
  }
}

/// Speckle, background and clamping applied to an accumulated signal.
OctVolume finish_volume(const ScenarioConfig& cfg, std::vector<float>&& signal, const RigidTransform& robot_pose,
                        Rng& rng) {
  OctVolume v(cfg.dims, cfg.spacing);
  auto& out = v.data();
  const double speckle = cfg.noise.oct_speckle_sigma;
  const double bg = cfg.noise.background_max;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double val = signal[i];
    if (val > 0.0 && speckle > 0.0) val *= std::max(0.0, 1.0 + rng.normal(speckle));
    if (bg > 0.0) val += rng.uniform(0.0, bg);
    out[i] = static_cast<float>(std::clamp(val, 0.0, 1.0));
  }
  v.set_acquisition_pose(robot_pose);
  return v;
}

double dropout_gain(const DropoutConfig& d, double cos_incidence) {
  if (cos_incidence <= 0.0) return 0.0;
  const double angle = rad2deg(std::acos(std::min(1.0, cos_incidence)));
  if (angle > d.cutoff_deg) return 0.0;
  return std::pow(cos_incidence, d.cos_exponent);
}

constexpr int kLateralSupersample = 4;

}  // namespace

Rng::Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(stream));
  h = splitmix64(h ^ index);
  engine_.seed(h);
}

double Rng::normal(double sigma) { return sigma * normal_(engine_); }

double Rng::uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

Vec3 Rng::unit_vector() {
  for (;;) {
    const Vec3 v(normal_(engine_), normal_(engine_), normal_(engine_));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

ScenarioConfig ScenarioConfig::defaults() {
  ScenarioConfig cfg;
  cfg.true_h_cg = RigidTransform(rotation_from_rpy({68.76, 70.41, 67.71}), Vec3(72.33, -62.51, 85.3));
  cfg.true_h_og = RigidTransform(rotation_from_rpy({0.27, 91.55, -0.42}), Vec3(140.28, -9.40, 92.15));
  cfg.board_pose_rw = RigidTransform::from_translation(Vec3(400.0, 0.0, 0.0));
  return cfg;
}

void ScenarioConfig::validate() const {
  validate_geometry(dims, spacing);
  intrinsics.validate();
  board.validate();
  for (const RigidTransform* t : {&true_h_cg, &true_h_og, &board_pose_rw}) {
    if (!t->is_valid(1e-9)) throw Error(ErrorCode::InvalidInput, "scenario transform is not a rigid motion");
  }
  const NoiseConfig& n = noise;
  for (double s : {n.corner_px_sigma, n.oct_speckle_sigma, n.background_max, n.robot_trans_sigma, n.robot_rot_sigma}) {
    if (!(s >= 0.0)) throw Error(ErrorCode::InvalidInput, "noise parameters must be >= 0");
  }
  if (!(surface.radius > 0.0)) throw Error(ErrorCode::InvalidInput, "sphere radius must be positive");
  if (!(dropout.cutoff_deg > 0.0 && dropout.cutoff_deg <= 90.0)) {
    throw Error(ErrorCode::InvalidInput, "cutoff angle must lie in (0, 90]");
  }
  if (!(dropout.cos_exponent >= 0.0)) throw Error(ErrorCode::InvalidInput, "cosine exponent must be >= 0");
  if (!(axial_sigma_voxels > 0.0)) throw Error(ErrorCode::InvalidInput, "axial sigma must be positive");
  if (center_marker < 0 || center_marker >= board.marker_count()) {
    throw Error(ErrorCode::InvalidInput, "center marker does not exist");
  }
  if (scan.alpha_steps < 1 || scan.beta_steps < 1 || !(scan.xy_step > 0.0) || !(scan.coverage_bin_mm > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "scan grid must be non-empty");
  }
}

RigidTransform true_camera_pose(const ScenarioConfig& cfg, const RigidTransform& robot_pose) {
  return (cfg.board_pose_rw.inverse() * robot_pose * cfg.true_h_cg).inverse();
}

RigidTransform true_probe_pose(const ScenarioConfig& cfg, const RigidTransform& robot_pose) {
  return (cfg.board_pose_rw.inverse() * robot_pose * cfg.true_h_og).inverse();
}

RigidTransform robot_pose_for(const RigidTransform& board_pose_rw, const RigidTransform& sensor_to_gripper,
                              const RigidTransform& sensor_pose) {
  return board_pose_rw * sensor_pose.inverse() * sensor_to_gripper.inverse();
}

namespace {

bool camera_sees_board(const ScenarioConfig& cfg, const RigidTransform& board_to_camera) {
  const auto& k = cfg.intrinsics;
  const double m = cfg.sampling.image_margin_px;
  std::vector<Vec3> pts = checker_corners_cw(cfg.board);
  pts.emplace_back(0.0, 0.0, 0.0);
  pts.emplace_back(cfg.board.width(), 0.0, 0.0);
  pts.emplace_back(cfg.board.width(), cfg.board.height(), 0.0);
  pts.emplace_back(0.0, cfg.board.height(), 0.0);
  for (const auto& p : pts) {
    const Vec3 pc = board_to_camera * p;
    if (pc.z() <= 1.0) return false;
    const Vec2 px = project_point(k, pc);
    if (!(px.x() >= m && px.y() >= m && px.x() <= k.width - 1 - m && px.y() <= k.height - 1 - m)) return false;
  }
  return true;
}

RigidTransform sample_camera_pose(const ScenarioConfig& cfg, int index, bool common_axis, Rng& rng) {
  const auto& s = cfg.sampling;
  // Low-discrepancy roll keeps any two poses well apart in orientation.
  const double g = frac(index * 0.6180339887498949);
  const double roll_nominal = -s.camera_roll_max_deg + 2.0 * s.camera_roll_max_deg * g;
  const Vec3 board_center(0.5 * cfg.board.width(), 0.5 * cfg.board.height(), 0.0);
  for (int attempt = 0; attempt < s.max_attempts; ++attempt) {
    const double tilt = common_axis ? 0.0 : deg2rad(s.camera_tilt_max_deg) * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double roll =
        deg2rad(std::clamp(roll_nominal + rng.uniform(-3.0, 3.0), -s.camera_roll_max_deg, s.camera_roll_max_deg));
    const double dist = rng.uniform(s.camera_distance_min, s.camera_distance_max);
    const double jx = common_axis ? 0.0 : rng.uniform(-s.camera_target_jitter, s.camera_target_jitter);
    const double jy = common_axis ? 0.0 : rng.uniform(-s.camera_target_jitter, s.camera_target_jitter);

    const Vec3 view = axis_angle(Vec3(std::cos(phi), std::sin(phi), 0.0), tilt) * Vec3(0.0, 0.0, -1.0);
    const Vec3 x0 = (Vec3::UnitX() - Vec3::UnitX().dot(view) * view).normalized();
    const Vec3 x_axis = axis_angle(view, roll) * x0;
    Mat3 r;
    r.col(0) = x_axis;
    r.col(1) = view.cross(x_axis);
    r.col(2) = view;
    const Vec3 center = board_center + Vec3(jx, jy, 0.0) - dist * view;
    const RigidTransform board_to_camera = RigidTransform(r, center).inverse();
    if (camera_sees_board(cfg, board_to_camera)) return board_to_camera;
  }
  throw Error(ErrorCode::UnreachableTarget, "no camera pose keeps the whole board in view");
}

RigidTransform sample_probe_pose(const ScenarioConfig& cfg, int index, int marker, bool common_axis, Rng& rng) {
  const auto& s = cfg.sampling;
  const auto& sp = cfg.spacing;
  const auto& d = cfg.dims;
  const double g = frac(index * 0.6180339887498949);
  const double yaw_nominal = -s.oct_yaw_max_deg + 2.0 * s.oct_yaw_max_deg * g;
  const Vec2 c2 = marker_center_cw(cfg.board, marker);
  const Vec3 marker_center(c2.x(), c2.y(), 0.0);
  const auto corners = marker_corners_cw(cfg.board, marker);
  const double half_diagonal = std::sqrt(0.5) * cfg.board.marker_edge;
  const double reach = 4.0 * cfg.axial_sigma_voxels * sp.dz;
  const double depth_extent = d.z * sp.dz;
  Mat3 face_down = Mat3::Identity();
  face_down(1, 1) = -1.0;
  face_down(2, 2) = -1.0;

  for (int attempt = 0; attempt < s.max_attempts; ++attempt) {
    const double tilt = common_axis ? 0.0 : deg2rad(s.oct_tilt_max_deg) * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double yaw =
        deg2rad(std::clamp(yaw_nominal + rng.uniform(-3.0, 3.0), -s.oct_yaw_max_deg, s.oct_yaw_max_deg));
    const Vec3 target(0.5 * (d.x - 1) * sp.dx + rng.uniform(-s.oct_lateral_jitter, s.oct_lateral_jitter),
                      0.5 * (d.y - 1) * sp.dy + rng.uniform(-s.oct_lateral_jitter, s.oct_lateral_jitter),
                      0.5 * depth_extent + rng.uniform(-s.oct_depth_jitter, s.oct_depth_jitter));
    const Mat3 r = axis_angle(Vec3(std::cos(phi), std::sin(phi), 0.0), tilt) * axis_angle(Vec3::UnitZ(), yaw) * face_down;
    const RigidTransform board_to_probe(r, target - r * marker_center);

    bool ok = true;
    const double m = s.oct_corner_margin_px;
    for (const auto& c : corners) {
      const Vec3 p = board_to_probe * c;
      const double u = p.x() / sp.dx;
      const double v = p.y() / sp.dy;
      if (u < m || v < m || u > d.x - 1 - m || v > d.y - 1 - m) ok = false;
    }
    const Vec3 n = r.col(2);
    if (n.z() >= -1e-9) ok = false;
    // The surface must stay inside the depth window around the marker and its
    // white surround; elsewhere it may leave the volume.
    const Vec3 c = board_to_probe * marker_center;
    const double radius = half_diagonal + s.oct_depth_check_margin;
    for (int a = 0; a < 16 && ok; ++a) {
      const double x = c.x() + radius * std::cos(a * kPi / 8.0);
      const double y = c.y() + radius * std::sin(a * kPi / 8.0);
      const double depth = (n.dot(board_to_probe.translation()) - n.x() * x - n.y() * y) / n.z();
      if (depth < reach || depth > depth_extent - reach) ok = false;
    }
    if (ok) return board_to_probe;
  }
  throw Error(ErrorCode::UnreachableTarget, "no probe pose keeps marker " + std::to_string(marker) + " in the FOV");
}

}  // namespace

std::vector<RigidTransform> sample_calibration_poses(const ScenarioConfig& cfg, int n, const PoseTarget& target,
                                                     std::string_view stream) {
  if (n < 0) throw Error(ErrorCode::InvalidInput, "pose count must be >= 0");
  std::vector<RigidTransform> poses;
  poses.reserve(static_cast<std::size_t>(n));
  const bool camera = target.kind == PoseTarget::Kind::CameraBoard;
  if (!camera) marker_square(cfg.board, target.marker_id);  // throws UnknownMarker
  const std::string name = std::string("poses/") + std::string(stream) +
                           (camera ? "/camera" : "/oct" + std::to_string(target.marker_id));
  for (int i = 0; i < n; ++i) {
    Rng rng(cfg.rng_seed, name, static_cast<std::uint64_t>(i));
    if (camera) {
      poses.push_back(robot_pose_for(cfg.board_pose_rw, cfg.true_h_cg, sample_camera_pose(cfg, i, target.common_axis, rng)));
    } else {
      poses.push_back(robot_pose_for(cfg.board_pose_rw, cfg.true_h_og,
                                     sample_probe_pose(cfg, i, target.marker_id, target.common_axis, rng)));
    }
  }
  return poses;
}

RigidTransform perturb_robot_pose(const ScenarioConfig& cfg, const RigidTransform& pose, Rng& rng) {
  const Vec3 axis = rng.unit_vector();
  const double angle = deg2rad(rng.normal(cfg.noise.robot_rot_sigma));
  const double sigma = cfg.noise.robot_trans_sigma;
  const Vec3 t(rng.normal(sigma), rng.normal(sigma), rng.normal(sigma));
  return pose * RigidTransform(axis_angle(axis, angle), t);
}

CameraObservation observe_camera(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng) {
  const RigidTransform board_to_camera = true_camera_pose(cfg, robot_pose);
  const auto& k = cfg.intrinsics;
  const auto corners = checker_corners_cw(cfg.board);
  CameraObservation obs;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Vec3 pc = board_to_camera * corners[i];
    if (pc.z() <= 0.0) throw Error(ErrorCode::BoardOutOfView, "board corner behind the camera");
    const Vec2 noise(rng.normal(cfg.noise.corner_px_sigma), rng.normal(cfg.noise.corner_px_sigma));
    const Vec2 px = project_point(k, pc) + noise;
    if (px.x() >= 0.0 && px.y() >= 0.0 && px.x() < k.width && px.y() < k.height) {
      obs.corner_ids.push_back(static_cast<int>(i));
      obs.px.push_back(px);
    }
  }
  if (obs.px.size() < 4) throw Error(ErrorCode::BoardOutOfView, "fewer than 4 board corners inside the image");
  return obs;
}

Image render_camera_image(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng, double noise_sigma,
                          int supersample) {
  const RigidTransform camera_to_board = true_camera_pose(cfg, robot_pose).inverse();
  const auto& k = cfg.intrinsics;
  const int ss = std::max(1, supersample);
  Image img(k.width, k.height);
  const Vec3 origin = camera_to_board.translation();
  const Mat3& r = camera_to_board.rotation();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      double acc = 0.0;
      for (int sv = 0; sv < ss; ++sv) {
        for (int su = 0; su < ss; ++su) {
          const Vec2 px(u - 0.5 + (su + 0.5) / ss, v - 0.5 + (sv + 0.5) / ss);
          const Vec2 xn = undistort_to_normalized(k, px);
          const Vec3 dir = r * Vec3(xn.x(), xn.y(), 1.0);
          double albedo = 0.0;
          if (std::abs(dir.z()) > 1e-12) {
            const double s = -origin.z() / dir.z();
            if (s > 0.0) {
              const Vec3 q = origin + s * dir;
              albedo = albedo_at(cfg.board, q.x(), q.y());
            }
          }
          acc += albedo;
        }
      }
      double val = acc / (ss * ss);
      if (noise_sigma > 0.0) val += rng.normal(noise_sigma);
      img.at(u, v) = static_cast<float>(val);
    }
  }
  return img;
}

OctVolume render_oct_board(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng) {
  const RigidTransform board_to_probe = true_probe_pose(cfg, robot_pose);
  const RigidTransform probe_to_board = board_to_probe.inverse();
  const auto& d = cfg.dims;
  const auto& sp = cfg.spacing;
  const Vec3 n = board_to_probe.rotation().col(2);
  if (n.z() >= 0.0) throw Error(ErrorCode::PlaneOutOfFov, "board does not face the probe");
  const double offset = n.dot(board_to_probe.translation());
  const double cos_incidence = -n.z();
  const double gain = dropout_gain(cfg.dropout, cos_incidence);
  const double depth_extent = d.z * sp.dz;
  const int ss = kLateralSupersample;
  const double weight = 1.0 / (ss * ss);

  std::vector<float> signal(static_cast<std::size_t>(d.z) * d.x * d.y, 0.0f);
  std::size_t hits = 0;
  for (int x = 0; x < d.x; ++x) {
    for (int y = 0; y < d.y; ++y) {
      for (int i = 0; i < ss; ++i) {
        for (int j = 0; j < ss; ++j) {
          const double xs = (x - 0.5 + (i + 0.5) / ss) * sp.dx;
          const double ys = (y - 0.5 + (j + 0.5) / ss) * sp.dy;
          const double depth = (offset - n.x() * xs - n.y() * ys) / n.z();
          if (depth >= 0.0 && depth < depth_extent) ++hits;
          if (gain <= 0.0) continue;
          const Vec3 q = probe_to_board * Vec3(xs, ys, depth);
          const double amplitude = albedo_at(cfg.board, q.x(), q.y()) * gain * weight;
          deposit_profile(signal, d, x, y, depth / sp.dz, amplitude, cfg.axial_sigma_voxels);
        }
      }
    }
  }
  if (hits == 0) throw Error(ErrorCode::PlaneOutOfFov, "board plane misses the OCT field of view");
  return finish_volume(cfg, std::move(signal), robot_pose, rng);
}

OctVolume render_oct_sphere(const ScenarioConfig& cfg, const RigidTransform& robot_pose, Rng& rng, bool allow_empty) {
  const RigidTransform probe_to_rw = robot_pose * cfg.true_h_og;
  const Vec3 c = probe_to_rw.inverse() * cfg.surface.center_rw;
  const double r = cfg.surface.radius;
  const auto& d = cfg.dims;
  const auto& sp = cfg.spacing;
  const double depth_extent = d.z * sp.dz;
  const int ss = kLateralSupersample;
  const double weight = 1.0 / (ss * ss);
  const double white = cfg.board.white_level;

  std::vector<float> signal(static_cast<std::size_t>(d.z) * d.x * d.y, 0.0f);
  std::size_t hits = 0;
  for (int x = 0; x < d.x; ++x) {
    for (int y = 0; y < d.y; ++y) {
      for (int i = 0; i < ss; ++i) {
        for (int j = 0; j < ss; ++j) {
          const double xs = (x - 0.5 + (i + 0.5) / ss) * sp.dx;
          const double ys = (y - 0.5 + (j + 0.5) / ss) * sp.dy;
          const double rho2 = (xs - c.x()) * (xs - c.x()) + (ys - c.y()) * (ys - c.y());
          if (rho2 >= r * r) continue;
          const double h = std::sqrt(r * r - rho2);
          const double depth = c.z() - h;
          if (depth < 0.0) continue;  // probe window inside the phantom
          if (depth < depth_extent) ++hits;
          const double gain = dropout_gain(cfg.dropout, h / r);
          deposit_profile(signal, d, x, y, depth / sp.dz, white * gain * weight, cfg.axial_sigma_voxels);
        }
      }
    }
  }
  if (hits == 0 && !allow_empty) throw Error(ErrorCode::SphereOutOfFov, "sphere misses the OCT field of view");
  return finish_volume(cfg, std::move(signal), robot_pose, rng);
}

}  // namespace octcal
