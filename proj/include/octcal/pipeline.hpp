#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "octcal/detect.hpp"
#include "octcal/sim.hpp"
#include "octcal/solve.hpp"
#include "octcal/volume.hpp"

namespace octcal {

/// A marker seen in one OCT volume: en-face corners and their 3D lift.
struct OctMarkerObservation {
  int marker_id = -1;
  std::array<Vec2, 4> corners_px{};
  std::array<Vec3, 4> corners_o{};  // probe frame, mm
  double confidence = 1.0;
};

struct OctProcessingParams {
  MarkerDetectParams detect;
  int threads = 0;
};

/// median -> en-face -> marker detection -> 3D lift.
std::vector<OctMarkerObservation> process_oct_volume(const OctVolume& v, const BoardSpec& board,
                                                     const OctProcessingParams& params = {});

/// Exact lifted corners of `marker` under the true chain (rendering bypassed).
OctMarkerObservation analytic_oct_observation(const ScenarioConfig& cfg, const RigidTransform& robot_pose, int marker);

/// Board -> probe from every corner of every observed marker.
RigidFit estimate_probe_pose(const std::vector<OctMarkerObservation>& markers, const BoardSpec& board);
PoseEstimate estimate_camera_pose(const CameraObservation& obs, const BoardSpec& board, const CameraIntrinsics& k);

enum class ObservationMode { Analytic, Rendered };

struct CameraFrame {
  RigidTransform robot_true;
  RigidTransform robot_reported;
  CameraObservation observation;
};

struct OctFrame {
  int target_marker = -1;
  RigidTransform robot_true;
  RigidTransform robot_reported;
  std::vector<OctMarkerObservation> markers;
};

/// Camera frames for n sampled poses. Uses rendered images plus checker
/// detection when cfg.render_rgb is set.
std::vector<CameraFrame> acquire_camera_frames(const ScenarioConfig& cfg, int n, const std::string& stream,
                                               int threads = 0);

/// Called with (frame index, rendered volume) before the volume is dropped.
using VolumeSink = std::function<void(int, const OctVolume&)>;

std::vector<OctFrame> acquire_oct_frames(const ScenarioConfig& cfg, int n, int marker, const std::string& stream,
                                         ObservationMode mode, int threads = 0, const VolumeSink& sink = {},
                                         bool process_volumes = true);

/// Frames whose observation could not be turned into a pose are skipped; the
/// returned indices map pose pairs back to frames.
struct PoseSeries {
  std::vector<PosePair> pairs;
  std::vector<int> frame_index;
  std::vector<double> residual;  // PnP mean px or registration RMS mm
};

PoseSeries camera_pose_series(const std::vector<CameraFrame>& frames, const BoardSpec& board,
                              const CameraIntrinsics& k);
PoseSeries probe_pose_series(const std::vector<OctFrame>& frames, const BoardSpec& board);

struct CalibrationResult {
  RigidTransform h_cg;
  RigidTransform h_og;
  HandEyeResult camera;
  HandEyeResult oct;
  ResidualReport camera_residuals;
  ResidualReport oct_residuals;
  PoseSeries camera_series;
  PoseSeries oct_series;
};

CalibrationResult calibrate(const std::vector<CameraFrame>& camera, const std::vector<OctFrame>& oct,
                            const BoardSpec& board, const CameraIntrinsics& k);

/// Camera and center-marker OCT frames for one calibration run.
struct CalibrationData {
  std::vector<CameraFrame> camera;
  std::vector<OctFrame> oct;
};

CalibrationData acquire_calibration_data(const ScenarioConfig& cfg, int n_camera, int n_oct, ObservationMode mode,
                                         const std::string& stream, int threads = 0);

}  // namespace octcal
