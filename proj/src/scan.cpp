#include "octcal/scan.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "octcal/error.hpp"
#include "octcal/parallel.hpp"

namespace octcal {

std::string to_string(ScanMode mode) { return mode == ScanMode::Full6d ? "full6d" : "translation3d"; }

ScanMode parse_scan_mode(const std::string& s) {
  if (s == "full6d") return ScanMode::Full6d;
  if (s == "translation3d") return ScanMode::Translation3d;
  throw Error(ErrorCode::InvalidInput, "unknown scan mode '" + s + "' (expected full6d or translation3d)");
}

Vec3 fov_axis_origin(const VolumeDims& dims, const VoxelSpacing& spacing) {
  return {0.5 * (dims.x - 1) * spacing.dx, 0.5 * (dims.y - 1) * spacing.dy, 0.0};
}

Mat3 downward_probe_rotation() { return Vec3(1.0, -1.0, -1.0).asDiagonal(); }

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return out;
}

Mat3 cap_rotation(double alpha_deg, double beta_deg) {
  return (Eigen::AngleAxisd(deg2rad(alpha_deg), Vec3::UnitY()) * Eigen::AngleAxisd(deg2rad(beta_deg), Vec3::UnitX()))
      .toRotationMatrix();
}

Vec3 cap_normal(double alpha_deg, double beta_deg) { return cap_rotation(alpha_deg, beta_deg) * Vec3::UnitZ(); }

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

}  // namespace

ScanPlan plan_6d_sphere(const Vec3& center, double radius, double standoff, const ScanSettings& grid,
                        const RigidTransform& h_og, const VolumeDims& dims, const VoxelSpacing& spacing) {
  if (!(radius > 0.0) || !(standoff >= 0.0)) throw Error(ErrorCode::InvalidInput, "radius and standoff must be positive");
  if (grid.alpha_steps < 1 || grid.beta_steps < 1) throw Error(ErrorCode::InvalidInput, "empty angular grid");
  if (std::max(std::abs(grid.alpha_min_deg), std::abs(grid.alpha_max_deg)) > 90.0 ||
      std::max(std::abs(grid.beta_min_deg), std::abs(grid.beta_max_deg)) > 90.0) {
    throw Error(ErrorCode::InvalidInput, "angular grid must stay within a hemisphere");
  }
  ScanPlan plan;
  plan.mode = ScanMode::Full6d;
  plan.alpha_steps = grid.alpha_steps;
  plan.beta_steps = grid.beta_steps;
  const Vec3 c_o = fov_axis_origin(dims, spacing);
  const RigidTransform gripper_from_probe_inv = h_og.inverse();
  const auto alphas = linspace(grid.alpha_min_deg, grid.alpha_max_deg, grid.alpha_steps);
  auto betas = linspace(grid.beta_min_deg, grid.beta_max_deg, grid.beta_steps);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    // Serpentine over beta keeps consecutive poses adjacent.
    for (std::size_t bi = 0; bi < betas.size(); ++bi) {
      const double beta = a % 2 == 0 ? betas[bi] : betas[betas.size() - 1 - bi];
      const Mat3 r = cap_rotation(alphas[a], beta) * downward_probe_rotation();
      const Vec3 n = cap_normal(alphas[a], beta);
      const Vec3 t = center + (radius + standoff) * n - r * c_o;
      const RigidTransform probe(r, t);
      plan.probe_poses.push_back(probe);
      plan.robot_poses.push_back(probe * gripper_from_probe_inv);
    }
  }
  return plan;
}

ScanPlan plan_translation_raster(const RasterBounds& bounds, double xy_step, const Mat3& probe_rotation,
                                 double initial_height, const RigidTransform& h_og, const VolumeDims& dims,
                                 const VoxelSpacing& spacing, const DepthServo& servo) {
  const double lateral = std::min((dims.x - 1) * spacing.dx, (dims.y - 1) * spacing.dy);
  if (!(xy_step > 0.0) || xy_step > lateral) {
    throw Error(ErrorCode::InvalidInput, "xy step must be positive and no larger than the lateral FOV");
  }
  if (!(bounds.x_max >= bounds.x_min && bounds.y_max >= bounds.y_min)) {
    throw Error(ErrorCode::InvalidInput, "raster bounds are empty");
  }
  auto axis = [&](double lo, double hi) {
    const int n = static_cast<int>(std::floor((hi - lo) / xy_step + 1e-9)) + 1;
    const double offset = 0.5 * ((hi - lo) - (n - 1) * xy_step);
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(lo + offset + i * xy_step);
    return v;
  };
  const auto xs = axis(bounds.x_min, bounds.x_max);
  const auto ys = axis(bounds.y_min, bounds.y_max);

  ScanPlan plan;
  plan.mode = ScanMode::Translation3d;
  plan.xy_step = xy_step;
  const Vec3 c_o = fov_axis_origin(dims, spacing);
  const Vec3 depth_axis = probe_rotation * Vec3::UnitZ();
  const double mid_depth = 0.5 * dims.z * spacing.dz;
  const RigidTransform h_og_inv = h_og.inverse();
  double height = initial_height;
  int index = 0;
  for (std::size_t row = 0; row < ys.size(); ++row) {
    for (std::size_t col = 0; col < xs.size(); ++col) {
      const double x = row % 2 == 0 ? xs[col] : xs[xs.size() - 1 - col];
      const Vec3 t = Vec3(x, ys[row], height) - probe_rotation * c_o;
      const RigidTransform probe(probe_rotation, t);
      plan.probe_poses.push_back(probe);
      plan.robot_poses.push_back(probe * h_og_inv);
      if (servo) {
        if (const auto depth = servo(index, probe)) height += (*depth - mid_depth) * depth_axis.z();
      }
      ++index;
    }
  }
  return plan;
}

void append_surface(PointCloud& cloud, const OctVolume& v, int index, const RigidTransform& h_og,
                    double min_intensity) {
  const SurfacePoints s = extract_surface(v, min_intensity);
  const RigidTransform to_rw = v.acquisition_pose() * h_og;
  for (std::size_t i = 0; i < s.points_o.size(); ++i) {
    cloud.points_rw.push_back(to_rw * s.points_o[i]);
    cloud.intensity.push_back(s.intensity[i]);
    cloud.source_volume.push_back(index);
  }
}

PointCloud stitch(const std::vector<OctVolume>& volumes, const RigidTransform& h_og, double min_intensity,
                  int threads) {
  std::vector<PointCloud> parts(volumes.size());
  parallel_for(volumes.size(), threads, [&](std::size_t i) {
    append_surface(parts[i], volumes[i], static_cast<int>(i), h_og, min_intensity);
  });
  PointCloud out;
  for (auto& p : parts) {
    out.points_rw.insert(out.points_rw.end(), p.points_rw.begin(), p.points_rw.end());
    out.intensity.insert(out.intensity.end(), p.intensity.begin(), p.intensity.end());
    out.source_volume.insert(out.source_volume.end(), p.source_volume.begin(), p.source_volume.end());
  }
  return out;
}

double SphereFit::rms() const {
  if (residuals.empty()) return 0.0;
  double acc = 0.0;
  for (double r : residuals) acc += r * r;
  return std::sqrt(acc / residuals.size());
}

double SphereFit::mean_abs_residual() const {
  if (residuals.empty()) return 0.0;
  double acc = 0.0;
  for (double r : residuals) acc += std::abs(r);
  return acc / residuals.size();
}

namespace {

double geometric_cost(const std::vector<Vec3>& pts, const Vec3& c, double r) {
  double acc = 0.0;
  for (const auto& p : pts) {
    const double e = (p - c).norm() - r;
    acc += e * e;
  }
  return acc;
}

}  // namespace

SphereFit fit_sphere(const std::vector<Vec3>& points) {
  const std::size_t n = points.size();
  if (n < 10) throw Error(ErrorCode::DegenerateCloud, "sphere fit needs at least 10 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (std::sqrt(std::max(0.0, es.eigenvalues()(0))) < 1e-6) {
    throw Error(ErrorCode::DegenerateCloud, "points are coplanar or collinear");
  }

  // Algebraic fit |p|^2 = 2 c.p + d with d = r^2 - |c|^2, centered for conditioning.
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd b(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 q = points[i] - mean;
    a.row(static_cast<Eigen::Index>(i)) << 2.0 * q.x(), 2.0 * q.y(), 2.0 * q.z(), 1.0;
    b(static_cast<Eigen::Index>(i)) = q.squaredNorm();
  }
  const Eigen::Vector4d sol = a.colPivHouseholderQr().solve(b);
  Vec3 c = sol.head<3>();
  const double r2 = sol(3) + c.squaredNorm();
  if (!(r2 > 0.0) || !std::isfinite(r2)) throw Error(ErrorCode::DegenerateCloud, "algebraic sphere fit is imaginary");
  c += mean;
  double r = std::sqrt(r2);

  SphereFit fit;
  double cost = geometric_cost(points, c, r);
  fit.algebraic_rms = std::sqrt(cost / n);

  double lambda = 1e-3;
  bool converged = false;
  for (int it = 0; it < 200 && !converged; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (const auto& p : points) {
      const Vec3 d = p - c;
      const double dist = d.norm();
      if (dist < 1e-15) continue;
      Eigen::Vector4d j;
      j << -d / dist, -1.0;
      const double e = dist - r;
      jtj += j * j.transpose();
      jtr += j * e;
    }
    for (;;) {
      Eigen::Matrix4d damped = jtj;
      for (int k = 0; k < 4; ++k) damped(k, k) *= 1.0 + lambda;
      const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) throw Error(ErrorCode::NonConvergence, "sphere fit produced a non-finite step");
      if (step.norm() < 1e-10) {
        converged = true;
        break;
      }
      const Vec3 c_new = c + step.head<3>();
      const double r_new = r + step(3);
      const double cost_new = geometric_cost(points, c_new, r_new);
      if (cost_new <= cost && r_new > 0.0) {
        c = c_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda * 0.1, 1e-12);
        fit.iterations = it + 1;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) {
        // No descent left at this damping: the current estimate is the floor.
        converged = true;
        break;
      }
    }
  }
  if (!converged) throw Error(ErrorCode::NonConvergence, "sphere fit did not converge in 200 iterations");

  fit.center = c;
  fit.radius = r;
  fit.residuals.reserve(n);
  for (const auto& p : points) fit.residuals.push_back((p - c).norm() - r);
  return fit;
}

std::vector<ProfilePoint> cross_section(const PointCloud& cloud, const Vec3& plane_point, const Vec3& plane_normal,
                                        double thickness, const Vec3& in_plane_hint) {
  if (!(thickness > 0.0) || plane_normal.norm() < 1e-12) {
    throw Error(ErrorCode::InvalidInput, "section needs a positive thickness and a normal");
  }
  const Vec3 n = plane_normal.normalized();
  Vec3 e1 = in_plane_hint - in_plane_hint.dot(n) * n;
  if (e1.norm() < 1e-9) {
    const Vec3 alt = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    e1 = alt - alt.dot(n) * n;
  }
  e1.normalize();
  const Vec3 e2 = n.cross(e1);
  std::vector<ProfilePoint> out;
  for (const auto& p : cloud.points_rw) {
    const Vec3 d = p - plane_point;
    if (std::abs(d.dot(n)) <= 0.5 * thickness) out.push_back({d.dot(e1), d.dot(e2)});
  }
  if (out.empty()) throw Error(ErrorCode::EmptySection, "no cloud points within the section slab");
  std::sort(out.begin(), out.end(), [](const ProfilePoint& a, const ProfilePoint& b) {
    return a.u < b.u || (a.u == b.u && a.v < b.v);
  });
  return out;
}

SphereCap cap_for_plan(const Vec3& center, double radius, const ScanSettings& grid, const VolumeDims& dims,
                       const VoxelSpacing& spacing) {
  const Vec3 half = fov_axis_origin(dims, spacing);
  const double ha = rad2deg(half.x() / radius);
  const double hb = rad2deg(half.y() / radius);
  SphereCap cap;
  cap.center = center;
  cap.radius = radius;
  cap.alpha_min_deg = grid.alpha_min_deg - ha;
  cap.alpha_max_deg = grid.alpha_max_deg + ha;
  cap.beta_min_deg = grid.beta_min_deg - hb;
  cap.beta_max_deg = grid.beta_max_deg + hb;
  return cap;
}

CoverageReport coverage_report(const PointCloud& cloud, const SphereCap& cap, double bin_mm,
                               const std::vector<RigidTransform>& probe_poses, const VolumeDims& dims,
                               const VoxelSpacing& spacing, double cutoff_deg) {
  if (!(bin_mm > 0.0) || !(cap.radius > 0.0)) throw Error(ErrorCode::InvalidInput, "bin and radius must be positive");
  const double bin_deg = rad2deg(bin_mm / cap.radius);
  const int na = std::max(1, static_cast<int>(std::ceil((cap.alpha_max_deg - cap.alpha_min_deg) / bin_deg - 1e-9)));
  const int nb = std::max(1, static_cast<int>(std::ceil((cap.beta_max_deg - cap.beta_min_deg) / bin_deg - 1e-9)));
  const double da = (cap.alpha_max_deg - cap.alpha_min_deg) / na;
  const double db = (cap.beta_max_deg - cap.beta_min_deg) / nb;

  std::vector<char> hit(static_cast<std::size_t>(na) * nb, 0);
  for (const auto& p : cloud.points_rw) {
    const Vec3 d = p - cap.center;
    const double dist = d.norm();
    // Points farther than 1 mm from the expected surface do not cover it.
    if (dist < 1e-12 || std::abs(dist - cap.radius) > 1.0) continue;
    const Vec3 n = d / dist;
    const double beta = rad2deg(std::asin(std::clamp(-n.y(), -1.0, 1.0)));
    const double alpha = rad2deg(std::atan2(n.x(), n.z()));
    const int ia = static_cast<int>(std::floor((alpha - cap.alpha_min_deg) / da));
    const int ib = static_cast<int>(std::floor((beta - cap.beta_min_deg) / db));
    if (ia < 0 || ia >= na || ib < 0 || ib >= nb) continue;
    hit[static_cast<std::size_t>(ia) * nb + ib] = 1;
  }

  const Vec3 box(( dims.x - 1) * spacing.dx, (dims.y - 1) * spacing.dy, (dims.z - 1) * spacing.dz);
  std::vector<RigidTransform> inverse;
  for (const auto& t : probe_poses) inverse.push_back(t.inverse());

  CoverageReport rep;
  rep.bins = na * nb;
  for (int ia = 0; ia < na; ++ia) {
    for (int ib = 0; ib < nb; ++ib) {
      const double alpha = cap.alpha_min_deg + (ia + 0.5) * da;
      const double beta = cap.beta_min_deg + (ib + 0.5) * db;
      const Vec3 n = cap_normal(alpha, beta);
      const Vec3 s = cap.center + cap.radius * n;
      // A cell counts as imaged once some A-scan passed over it; it may still
      // have been outside that volume's depth window.
      double best = 180.0;
      bool lateral = false;
      bool in_depth = false;
      for (std::size_t k = 0; k < probe_poses.size(); ++k) {
        const Vec3 q = inverse[k] * s;
        if (q.x() < 0.0 || q.y() < 0.0 || q.x() > box.x() || q.y() > box.y()) continue;
        lateral = true;
        if (q.z() >= 0.0 && q.z() <= box.z()) in_depth = true;
        const Vec3 axis = probe_poses[k].rotation() * Vec3::UnitZ();
        best = std::min(best, rad2deg(std::acos(std::clamp(-axis.dot(n), -1.0, 1.0))));
      }
      if (hit[static_cast<std::size_t>(ia) * nb + ib]) {
        ++rep.covered;
        if (lateral) rep.max_incidence_covered_deg = std::max(rep.max_incidence_covered_deg, best);
      } else if (lateral) {
        ++rep.dropout_bins;
        if (best > cutoff_deg) ++rep.dropout_above_cutoff;
        if (!in_depth) ++rep.dropout_depth_clipped;
      }
    }
  }
  rep.coverage = rep.bins > 0 ? static_cast<double>(rep.covered) / rep.bins : 0.0;
  rep.dropout_above_cutoff_fraction =
      rep.dropout_bins > 0 ? static_cast<double>(rep.dropout_above_cutoff) / rep.dropout_bins : 1.0;
  return rep;
}

ScanResult run_scan(const ScenarioConfig& cfg, const RigidTransform& h_og, ScanMode mode, const std::string& stream,
                    int threads, const std::function<void(int, const OctVolume&)>& sink) {
  const auto& s = cfg.scan;
  const Vec3 center = cfg.surface.center_rw;
  const double radius = cfg.surface.radius;
  const std::string tag = stream + "/" + to_string(mode);

  ScanResult out;
  auto acquire = [&](int i, const RigidTransform& robot_cmd, PointCloud& cloud, RigidTransform& reported) {
    Rng robot_rng(cfg.rng_seed, "robot/" + tag, static_cast<std::uint64_t>(i));
    reported = perturb_robot_pose(cfg, robot_cmd, robot_rng);
    Rng vol_rng(cfg.rng_seed, "volume/" + tag, static_cast<std::uint64_t>(i));
    OctVolume v = render_oct_sphere(cfg, robot_cmd, vol_rng, true);
    v.set_acquisition_pose(reported);
    append_surface(cloud, v, i, h_og, cfg.min_intensity);
    return v;
  };

  if (mode == ScanMode::Full6d) {
    out.plan = plan_6d_sphere(center, radius, s.standoff, s, h_og, cfg.dims, cfg.spacing);
    const std::size_t n = out.plan.robot_poses.size();
    std::vector<PointCloud> parts(n);
    out.reported_poses.resize(n);
    std::mutex sink_mutex;
    parallel_for(n, threads, [&](std::size_t i) {
      const OctVolume v = acquire(static_cast<int>(i), out.plan.robot_poses[i], parts[i], out.reported_poses[i]);
      if (sink) {
        std::lock_guard lock(sink_mutex);
        sink(static_cast<int>(i), v);
      }
    });
    for (auto& p : parts) {
      out.cloud.points_rw.insert(out.cloud.points_rw.end(), p.points_rw.begin(), p.points_rw.end());
      out.cloud.intensity.insert(out.cloud.intensity.end(), p.intensity.begin(), p.intensity.end());
      out.cloud.source_volume.insert(out.cloud.source_volume.end(), p.source_volume.begin(), p.source_volume.end());
    }
  } else {
    // The raster covers the footprint of the 6D patch centers at one fixed
    // orientation; the servo needs each volume before the next pose exists.
    RasterBounds b{1e300, -1e300, 1e300, -1e300};
    for (double a : linspace(s.alpha_min_deg, s.alpha_max_deg, s.alpha_steps)) {
      for (double be : linspace(s.beta_min_deg, s.beta_max_deg, s.beta_steps)) {
        const Vec3 p = center + radius * cap_normal(a, be);
        b.x_min = std::min(b.x_min, p.x());
        b.x_max = std::max(b.x_max, p.x());
        b.y_min = std::min(b.y_min, p.y());
        b.y_max = std::max(b.y_max, p.y());
      }
    }
    const Mat3 rot = downward_probe_rotation();
    const double mid_depth = 0.5 * cfg.dims.z * cfg.spacing.dz;
    const RigidTransform h_og_inv = h_og.inverse();
    DepthServo servo = [&](int i, const RigidTransform& probe) -> std::optional<double> {
      const RigidTransform robot_cmd = probe * h_og_inv;
      PointCloud part;
      RigidTransform reported;
      const OctVolume v = acquire(i, robot_cmd, part, reported);
      out.reported_poses.push_back(reported);
      out.cloud.points_rw.insert(out.cloud.points_rw.end(), part.points_rw.begin(), part.points_rw.end());
      out.cloud.intensity.insert(out.cloud.intensity.end(), part.intensity.begin(), part.intensity.end());
      out.cloud.source_volume.insert(out.cloud.source_volume.end(), part.source_volume.begin(),
                                     part.source_volume.end());
      if (sink) sink(i, v);
      if (part.empty()) return std::nullopt;
      std::vector<double> depths;
      for (const auto& p : extract_surface(v, cfg.min_intensity).points_o) depths.push_back(p.z());
      return median_of(depths);
    };
    // First FOV center sits mid-depth above the expected surface.
    const double x0 = 0.5 * ((b.x_max - b.x_min) - std::floor((b.x_max - b.x_min) / s.xy_step + 1e-9) * s.xy_step);
    const double y0 = 0.5 * ((b.y_max - b.y_min) - std::floor((b.y_max - b.y_min) / s.xy_step + 1e-9) * s.xy_step);
    const double dx = b.x_min + x0 - center.x();
    const double dy = b.y_min + y0 - center.y();
    const double rho2 = std::min(dx * dx + dy * dy, radius * radius);
    const double initial_height = center.z() + std::sqrt(radius * radius - rho2) + mid_depth;
    out.plan = plan_translation_raster(b, s.xy_step, rot, initial_height, h_og, cfg.dims, cfg.spacing, servo);
  }
  for (const auto& robot : out.plan.robot_poses) out.true_probe_poses.push_back(robot * cfg.true_h_og);
  return out;
}

}  // namespace octcal
