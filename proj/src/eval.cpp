#include "octcal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

#include "octcal/error.hpp"

namespace octcal {

std::vector<SensorView> camera_views(const PoseSeries& series, const BoardSpec& board, const CameraIntrinsics& k) {
  std::vector<SensorView> out;
  for (std::size_t s = 0; s < series.pairs.size(); ++s) {
    SensorView v;
    v.index = series.frame_index[s];
    v.robot_pose = series.pairs[s].robot_pose;
    v.sensor_pose = series.pairs[s].sensor_pose;
    for (int id = 0; id < board.marker_count(); ++id) {
      bool inside = true;
      for (const Vec3& c : marker_corners_cw(board, id)) {
        const Vec3 pc = v.sensor_pose * c;
        if (pc.z() <= 0.0) {
          inside = false;
          break;
        }
        const Vec2 px = project_point(k, pc);
        if (!(px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= k.width - 1 && px.y() <= k.height - 1)) {
          inside = false;
          break;
        }
      }
      if (inside) v.marker_ids.push_back(id);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<SensorView> oct_views(const PoseSeries& series, const std::vector<OctFrame>& frames) {
  std::vector<SensorView> out;
  for (std::size_t s = 0; s < series.pairs.size(); ++s) {
    SensorView v;
    v.index = series.frame_index[s];
    v.robot_pose = series.pairs[s].robot_pose;
    v.sensor_pose = series.pairs[s].sensor_pose;
    for (const auto& m : frames.at(static_cast<std::size_t>(v.index)).markers) v.marker_ids.push_back(m.marker_id);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ReprojectionRecord> reprojection_error(const RigidTransform& h_cg, const RigidTransform& h_og,
                                                   const std::vector<SensorView>& camera,
                                                   const std::vector<SensorView>& oct, const BoardSpec& board) {
  std::vector<ReprojectionRecord> out;
  for (const SensorView& o : oct) {
    const RigidTransform oct_chain = o.robot_pose * h_og * o.sensor_pose;
    for (int id : o.marker_ids) {
      const auto corners = marker_corners_cw(board, id);
      for (const SensorView& c : camera) {
        if (std::find(c.marker_ids.begin(), c.marker_ids.end(), id) == c.marker_ids.end()) continue;
        const RigidTransform cam_chain = c.robot_pose * h_cg * c.sensor_pose;
        ReprojectionRecord r;
        r.marker_id = id;
        r.pose_i = c.index;
        r.pose_k = o.index;
        double sq = 0.0;
        for (int q = 0; q < 4; ++q) {
          r.x_cwi[q] = cam_chain * corners[q];
          r.x_cwk[q] = oct_chain * corners[q];
          sq += (r.x_cwi[q] - r.x_cwk[q]).squaredNorm();
        }
        r.rmse = std::sqrt(sq / 4.0);
        out.push_back(r);
      }
    }
  }
  if (out.empty()) throw Error(ErrorCode::NoCommonMarkers, "no marker was seen by both a camera and an OCT pose");
  return out;
}

ErrorSummary summarize(const std::vector<double>& values) {
  ErrorSummary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  for (double v : values) {
    s.mean += v;
    s.max = std::max(s.max, v);
  }
  s.mean /= values.size();
  if (values.size() > 1) {
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / (values.size() - 1));
  }
  return s;
}

ErrorSummary summarize_records(const std::vector<ReprojectionRecord>& records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.rmse);
  return summarize(v);
}

std::map<int, double> per_marker_rms(const std::vector<ReprojectionRecord>& records) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : records) {
    auto& a = acc[r.marker_id];
    a.first += r.rmse * r.rmse;
    a.second += 1;
  }
  std::map<int, double> out;
  for (const auto& [id, a] : acc) out[id] = std::sqrt(a.first / a.second);
  return out;
}

EvalDataset build_eval_dataset(const ScenarioConfig& cfg, int n_cam, int n_oct, int n_eval, bool held_out_markers,
                               ObservationMode mode, const std::string& stream, int threads) {
  EvalDataset d;
  const auto cam_frames = acquire_camera_frames(cfg, n_cam, stream, threads);
  d.camera = camera_pose_series(cam_frames, cfg.board, cfg.intrinsics);
  d.camera_views = camera_views(d.camera, cfg.board, cfg.intrinsics);

  const auto calib = acquire_oct_frames(cfg, n_oct, cfg.center_marker, stream, mode, threads);
  d.oct = probe_pose_series(calib, cfg.board);

  // Evaluation volumes get their own stream so they never coincide with the
  // calibration poses.
  std::vector<OctFrame> eval;
  if (n_eval > 0) eval = acquire_oct_frames(cfg, n_eval, cfg.center_marker, stream + "/eval", mode, threads);
  if (held_out_markers) {
    for (int id = 0; id < cfg.board.marker_count(); ++id) {
      if (id == cfg.center_marker) continue;
      auto f = acquire_oct_frames(cfg, 1, id, stream + "/heldout", mode, threads);
      eval.insert(eval.end(), f.begin(), f.end());
    }
  }
  const PoseSeries eval_series = probe_pose_series(eval, cfg.board);
  d.oct_views = oct_views(eval_series, eval);
  return d;
}

std::vector<CurvePoint> plateau_study(const EvalDataset& data, const BoardSpec& board, const std::vector<int>& n_values) {
  const RigidTransform h_cg = hand_eye_tsai_lenz(data.camera.pairs).sensor_to_gripper;
  std::vector<CurvePoint> out;
  for (int n : n_values) {
    if (n < 1 || n > static_cast<int>(data.oct.pairs.size())) {
      throw Error(ErrorCode::InvalidInput, "plateau study needs " + std::to_string(n) + " OCT poses, dataset has " +
                                               std::to_string(data.oct.pairs.size()));
    }
    const std::span<const PosePair> first(data.oct.pairs.data(), static_cast<std::size_t>(n));
    const RigidTransform h_og = hand_eye_tsai_lenz(first).sensor_to_gripper;
    CurvePoint p;
    p.x = n;
    p.error = summarize_records(reprojection_error(h_cg, h_og, data.camera_views, data.oct_views, board));
    out.push_back(p);
  }
  return out;
}

std::vector<CurvePoint> distance_study(const EvalDataset& data, const BoardSpec& board, int center_marker,
                                       double bin_mm) {
  if (!(bin_mm > 0.0)) throw Error(ErrorCode::InvalidInput, "distance bin must be positive");
  std::vector<SensorView> held_out;
  for (const SensorView& v : data.oct_views) {
    SensorView h = v;
    h.marker_ids.clear();
    for (int id : v.marker_ids) {
      if (id != center_marker) h.marker_ids.push_back(id);
    }
    if (!h.marker_ids.empty()) held_out.push_back(std::move(h));
  }
  if (held_out.empty()) throw Error(ErrorCode::NoHeldOutMarkers, "no marker other than the center marker was observed");

  const RigidTransform h_cg = hand_eye_tsai_lenz(data.camera.pairs).sensor_to_gripper;
  const RigidTransform h_og = hand_eye_tsai_lenz(data.oct.pairs).sensor_to_gripper;
  std::vector<ReprojectionRecord> records;
  try {
    records = reprojection_error(h_cg, h_og, data.camera_views, held_out, board);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoCommonMarkers) throw;
    throw Error(ErrorCode::NoHeldOutMarkers, "held-out markers were never seen by the camera");
  }

  const Vec2 center = marker_center_cw(board, center_marker);
  std::map<int, std::vector<std::pair<double, double>>> bins;  // bin -> (distance, marker rms)
  for (const auto& [id, rms] : per_marker_rms(records)) {
    const double d = (marker_center_cw(board, id) - center).norm();
    bins[static_cast<int>(std::floor(d / bin_mm))].emplace_back(d, rms);
  }
  std::vector<CurvePoint> out;
  for (const auto& [bin, items] : bins) {
    std::vector<double> errs;
    double dist = 0.0;
    for (const auto& [d, e] : items) {
      dist += d;
      errs.push_back(e);
    }
    CurvePoint p;
    p.x = dist / items.size();
    p.error = summarize(errs);
    out.push_back(p);
  }
  return out;
}

double TransformStats::max_translation_std() const {
  return *std::max_element(translation_std.begin(), translation_std.end());
}
double TransformStats::max_rpy_std() const { return *std::max_element(rpy_std.begin(), rpy_std.end()); }
double TransformStats::max_rotation_std() const {
  return *std::max_element(rotation_std.begin(), rotation_std.end());
}

namespace {

double branch_distance(const EulerRPY& a, const EulerRPY& b) {
  return std::abs(wrap_degrees(a.roll - b.roll)) + std::abs(wrap_degrees(a.pitch - b.pitch)) +
         std::abs(wrap_degrees(a.yaw - b.yaw));
}

std::array<double, 3> sample_std(const std::vector<std::array<double, 3>>& rows) {
  std::array<double, 3> out{};
  if (rows.size() < 2) return out;
  for (int c = 0; c < 3; ++c) {
    double m = 0.0;
    for (const auto& r : rows) m += r[c];
    m /= rows.size();
    double acc = 0.0;
    for (const auto& r : rows) acc += (r[c] - m) * (r[c] - m);
    out[c] = std::sqrt(acc / (rows.size() - 1));
  }
  return out;
}

}  // namespace

TransformStats transform_stats(const std::vector<RigidTransform>& runs) {
  if (runs.empty()) throw Error(ErrorCode::InvalidInput, "no runs to summarize");
  TransformStats s;

  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  Vec3 t_mean = Vec3::Zero();
  for (const auto& r : runs) {
    const Eigen::Vector4d q = r.quaternion().coeffs();
    acc += q * q.transpose();
    t_mean += r.translation();
  }
  t_mean /= runs.size();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(acc);
  const Eigen::Vector4d qv = es.eigenvectors().col(3);
  const Eigen::Quaterniond q_mean(qv.w(), qv.x(), qv.y(), qv.z());
  s.mean = RigidTransform::from_quaternion(q_mean.normalized(), t_mean);
  s.translation_mean = {t_mean.x(), t_mean.y(), t_mean.z()};

  const EulerRPY principal = rpy_from_rotation(s.mean.rotation());
  const EulerRPY alternate = alternate_rpy(principal);
  auto weight = [](const EulerRPY& e) { return std::abs(e.roll) + std::abs(e.yaw); };
  s.rpy_mean = weight(alternate) < weight(principal) ? alternate : principal;

  std::vector<std::array<double, 3>> trans, rpy, rotvec;
  for (const auto& r : runs) {
    trans.push_back({r.translation().x(), r.translation().y(), r.translation().z()});
    const EulerRPY p = rpy_from_rotation(r.rotation());
    const EulerRPY a = alternate_rpy(p);
    const EulerRPY e = branch_distance(p, s.rpy_mean) <= branch_distance(a, s.rpy_mean) ? p : a;
    // Unwrap around the mean so runs straddling +-180 do not inflate the spread.
    rpy.push_back({s.rpy_mean.roll + wrap_degrees(e.roll - s.rpy_mean.roll),
                   s.rpy_mean.pitch + wrap_degrees(e.pitch - s.rpy_mean.pitch),
                   s.rpy_mean.yaw + wrap_degrees(e.yaw - s.rpy_mean.yaw)});
    const Vec3 w = rotation_to_vector(s.mean.rotation().transpose() * r.rotation()) * (180.0 / kPi);
    rotvec.push_back({w.x(), w.y(), w.z()});
  }
  s.translation_std = sample_std(trans);
  s.rpy_std = sample_std(rpy);
  s.rotation_std = sample_std(rotvec);
  return s;
}

RepeatabilityResult repeatability(const ScenarioConfig& cfg, int runs, int n_cam, int n_oct, ObservationMode mode,
                                  int threads) {
  if (runs < 2) throw Error(ErrorCode::InvalidInput, "repeatability needs at least two runs");
  RepeatabilityResult r;
  r.runs = runs;
  for (int run = 0; run < runs; ++run) {
    const auto data = acquire_calibration_data(cfg, n_cam, n_oct, mode, "run" + std::to_string(run), threads);
    const auto cal = calibrate(data.camera, data.oct, cfg.board, cfg.intrinsics);
    r.h_cg.push_back(cal.h_cg);
    r.h_og.push_back(cal.h_og);
  }
  r.cg = transform_stats(r.h_cg);
  r.og = transform_stats(r.h_og);
  return r;
}

}  // namespace octcal
