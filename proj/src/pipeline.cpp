#include "octcal/pipeline.hpp"

#include <mutex>
#include <optional>

#include "octcal/error.hpp"
#include "octcal/parallel.hpp"

namespace octcal {

std::vector<OctMarkerObservation> process_oct_volume(const OctVolume& v, const BoardSpec& board,
                                                     const OctProcessingParams& params) {
  const OctVolume filtered = median_filter_3(v, params.threads);
  const EnfaceResult e = enface_max_projection(filtered);
  // The 3x3x3 median drags oblique edges toward the voxel grid by ~0.1 px,
  // so edge lines are fitted on the unfiltered projection. Detection,
  // decoding and the depth map keep the filtered volume.
  MarkerDetectParams detect = params.detect;
  const bool edge_lines = detect.refinement == CornerRefinement::EdgeLines;
  if (edge_lines) detect.refinement = CornerRefinement::None;
  std::optional<Image> raw_enface;
  if (edge_lines) raw_enface = enface_max_projection(v).image;

  std::vector<OctMarkerObservation> out;
  for (const Detection& det : detect_markers(e.image, board.dictionary, detect)) {
    OctMarkerObservation obs;
    obs.marker_id = det.marker_id;
    obs.corners_px = det.corners_px;
    obs.confidence = det.decode_confidence;
    if (edge_lines) {
      if (auto refined = refine_quad_edges(*raw_enface, det.corners_px)) {
        obs.corners_px = *refined;
      } else if (auto fallback = refine_quad_edges(e.image, det.corners_px)) {
        obs.corners_px = *fallback;
      }
    }
    try {
      const auto lifted = lift_pixels_to_3d(e, obs.corners_px, v.spacing());
      for (int k = 0; k < 4; ++k) obs.corners_o[k] = lifted[k];
    } catch (const Error& err) {
      if (err.code() != ErrorCode::OutOfBounds) throw;
      continue;
    }
    out.push_back(obs);
  }
  return out;
}

OctMarkerObservation analytic_oct_observation(const ScenarioConfig& cfg, const RigidTransform& robot_pose, int marker) {
  const RigidTransform board_to_probe = true_probe_pose(cfg, robot_pose);
  const auto corners = marker_corners_cw(cfg.board, marker);
  OctMarkerObservation obs;
  obs.marker_id = marker;
  for (int k = 0; k < 4; ++k) {
    obs.corners_o[k] = board_to_probe * corners[k];
    obs.corners_px[k] = Vec2(obs.corners_o[k].x() / cfg.spacing.dx, obs.corners_o[k].y() / cfg.spacing.dy);
  }
  return obs;
}

RigidFit estimate_probe_pose(const std::vector<OctMarkerObservation>& markers, const BoardSpec& board) {
  std::vector<Vec3> object;
  std::vector<Vec3> measured;
  for (const auto& m : markers) {
    const auto corners = marker_corners_cw(board, m.marker_id);
    for (int k = 0; k < 4; ++k) {
      object.push_back(corners[k]);
      measured.push_back(m.corners_o[k]);
    }
  }
  return register_3d3d(object, measured);
}

PoseEstimate estimate_camera_pose(const CameraObservation& obs, const BoardSpec& board, const CameraIntrinsics& k) {
  const auto corners = checker_corners_cw(board);
  std::vector<Vec3> object;
  object.reserve(obs.corner_ids.size());
  for (int id : obs.corner_ids) object.push_back(corners.at(static_cast<std::size_t>(id)));
  return pnp_planar(object, obs.px, k);
}

namespace {

/// Outer parallelism over frames; inner work then runs single-threaded.
int inner_threads(int threads, std::size_t items) {
  return resolve_threads(threads) > 1 && items > 1 ? 1 : threads;
}

}  // namespace

std::vector<CameraFrame> acquire_camera_frames(const ScenarioConfig& cfg, int n, const std::string& stream,
                                               int threads) {
  const auto poses = sample_calibration_poses(cfg, n, PoseTarget::camera(), stream);
  std::vector<CameraFrame> frames(poses.size());
  parallel_for(poses.size(), threads, [&](std::size_t i) {
    CameraFrame& f = frames[i];
    f.robot_true = poses[i];
    Rng robot_rng(cfg.rng_seed, "robot/" + stream + "/camera", i);
    f.robot_reported = perturb_robot_pose(cfg, poses[i], robot_rng);
    Rng obs_rng(cfg.rng_seed, "camera/" + stream, i);
    if (!cfg.render_rgb) {
      f.observation = observe_camera(cfg, poses[i], obs_rng);
      return;
    }
    const Image img = render_camera_image(cfg, poses[i], obs_rng, cfg.noise.camera_image_sigma);
    try {
      for (const CheckerCorner& c : detect_checker_corners(img, cfg.board)) {
        f.observation.corner_ids.push_back(c.index);
        f.observation.px.push_back(c.px);
      }
    } catch (const Error& err) {
      if (err.code() != ErrorCode::BoardNotFound) throw;
    }
  });
  return frames;
}

std::vector<OctFrame> acquire_oct_frames(const ScenarioConfig& cfg, int n, int marker, const std::string& stream,
                                         ObservationMode mode, int threads, const VolumeSink& sink,
                                         bool process_volumes) {
  const auto poses = sample_calibration_poses(cfg, n, PoseTarget::oct(marker), stream);
  std::vector<OctFrame> frames(poses.size());
  std::mutex sink_mutex;
  const int inner = inner_threads(threads, poses.size());
  const std::string tag = stream + "/oct" + std::to_string(marker);
  parallel_for(poses.size(), threads, [&](std::size_t i) {
    OctFrame& f = frames[i];
    f.target_marker = marker;
    f.robot_true = poses[i];
    Rng robot_rng(cfg.rng_seed, "robot/" + tag, i);
    f.robot_reported = perturb_robot_pose(cfg, poses[i], robot_rng);
    if (mode == ObservationMode::Analytic) {
      f.markers.push_back(analytic_oct_observation(cfg, poses[i], marker));
      return;
    }
    Rng speckle_rng(cfg.rng_seed, "volume/" + tag, i);
    OctVolume vol = render_oct_board(cfg, poses[i], speckle_rng);
    vol.set_acquisition_pose(f.robot_reported);
    if (sink) {
      std::lock_guard lock(sink_mutex);
      sink(static_cast<int>(i), vol);
    }
    if (!process_volumes) return;
    OctProcessingParams params;
    params.threads = inner;
    f.markers = process_oct_volume(vol, cfg.board, params);
  });
  return frames;
}

PoseSeries camera_pose_series(const std::vector<CameraFrame>& frames, const BoardSpec& board,
                              const CameraIntrinsics& k) {
  PoseSeries s;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].observation.px.size() < 4) continue;
    try {
      const PoseEstimate est = estimate_camera_pose(frames[i].observation, board, k);
      s.pairs.push_back({frames[i].robot_reported, est.pose});
      s.frame_index.push_back(static_cast<int>(i));
      s.residual.push_back(est.mean_residual_px);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateConfiguration && err.code() != ErrorCode::NonConvergence) throw;
    }
  }
  return s;
}

PoseSeries probe_pose_series(const std::vector<OctFrame>& frames, const BoardSpec& board) {
  PoseSeries s;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].markers.empty()) continue;
    try {
      const RigidFit fit = estimate_probe_pose(frames[i].markers, board);
      s.pairs.push_back({frames[i].robot_reported, fit.transform});
      s.frame_index.push_back(static_cast<int>(i));
      s.residual.push_back(fit.rms);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateGeometry) throw;
    }
  }
  return s;
}

CalibrationResult calibrate(const std::vector<CameraFrame>& camera, const std::vector<OctFrame>& oct,
                            const BoardSpec& board, const CameraIntrinsics& k) {
  CalibrationResult r;
  r.camera_series = camera_pose_series(camera, board, k);
  r.oct_series = probe_pose_series(oct, board);
  r.camera = hand_eye_tsai_lenz(r.camera_series.pairs);
  r.oct = hand_eye_tsai_lenz(r.oct_series.pairs);
  r.h_cg = r.camera.sensor_to_gripper;
  r.h_og = r.oct.sensor_to_gripper;
  r.camera_residuals = residual_diagnostics(r.camera_series.pairs, r.h_cg);
  r.oct_residuals = residual_diagnostics(r.oct_series.pairs, r.h_og);
  return r;
}

CalibrationData acquire_calibration_data(const ScenarioConfig& cfg, int n_camera, int n_oct, ObservationMode mode,
                                         const std::string& stream, int threads) {
  CalibrationData d;
  d.camera = acquire_camera_frames(cfg, n_camera, stream, threads);
  d.oct = acquire_oct_frames(cfg, n_oct, cfg.center_marker, stream, mode, threads);
  return d;
}

}  // namespace octcal
