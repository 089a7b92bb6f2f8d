#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "octcal/pipeline.hpp"

namespace octcal {

/// One usable sensor pose: the reported gripper pose, the estimated board
/// pose (CW -> sensor) and the markers it saw.
struct SensorView {
  int index = 0;  // frame index in the acquisition
  RigidTransform robot_pose;
  RigidTransform sensor_pose;
  std::vector<int> marker_ids;
};

/// Views from a camera pose series; a marker counts as seen when all four
/// corners project inside the image under the estimated pose.
std::vector<SensorView> camera_views(const PoseSeries& series, const BoardSpec& board, const CameraIntrinsics& k);
/// Views from an OCT pose series; markers are the ones decoded in each volume.
std::vector<SensorView> oct_views(const PoseSeries& series, const std::vector<OctFrame>& frames);

/// The same marker mapped into robot world through the camera chain
/// (x_cwi) and through the OCT chain (x_cwk).
struct ReprojectionRecord {
  int marker_id = -1;
  int pose_i = -1;  // camera view index
  int pose_k = -1;  // OCT view index
  std::array<Vec3, 4> x_cwi{};
  std::array<Vec3, 4> x_cwk{};
  double rmse = 0.0;  // RMS over the four corners of ||x_cwi - x_cwk||
};

/// One record per (marker, camera view, OCT view) where both views saw the
/// marker. Throws NoCommonMarkers.
std::vector<ReprojectionRecord> reprojection_error(const RigidTransform& h_cg, const RigidTransform& h_og,
                                                   const std::vector<SensorView>& camera,
                                                   const std::vector<SensorView>& oct, const BoardSpec& board);

struct ErrorSummary {
  int count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
  double max = 0.0;
};

ErrorSummary summarize(const std::vector<double>& values);
ErrorSummary summarize_records(const std::vector<ReprojectionRecord>& records);
/// RMS of record errors per marker.
std::map<int, double> per_marker_rms(const std::vector<ReprojectionRecord>& records);

/// Calibration poses plus an independent evaluation set.
struct EvalDataset {
  PoseSeries camera;                     // camera calibration pairs
  PoseSeries oct;                        // OCT calibration pairs, acquisition order
  std::vector<SensorView> camera_views;  // evaluation side, camera chain
  std::vector<SensorView> oct_views;     // evaluation side, held-out OCT volumes
};

/// Rendered or analytic data for the studies: `n_oct` center-marker volumes for
/// calibration, `n_eval` further center-marker volumes for evaluation and, when
/// `held_out_markers` is set, one volume for every other marker.
EvalDataset build_eval_dataset(const ScenarioConfig& cfg, int n_cam, int n_oct, int n_eval, bool held_out_markers,
                               ObservationMode mode, const std::string& stream, int threads = 0);

struct CurvePoint {
  double x = 0.0;  // volume count or distance in mm
  ErrorSummary error;
};

/// Hand-eye on the first n OCT poses for each n, scored on the evaluation
/// views. The camera side is calibrated once on all camera pairs.
std::vector<CurvePoint> plateau_study(const EvalDataset& data, const BoardSpec& board, const std::vector<int>& n_values);

/// Calibration on the center-marker poses only, then held-out markers grouped
/// in `bin_mm` bins of CW distance from the center marker. Each bin summarizes
/// per-marker RMS values; x is the mean distance of the markers in the bin.
/// Throws NoHeldOutMarkers.
std::vector<CurvePoint> distance_study(const EvalDataset& data, const BoardSpec& board, int center_marker = 17,
                                       double bin_mm = 10.0);

/// Mean and spread of one transform over repeated calibrations.
struct TransformStats {
  RigidTransform mean;                  // chordal quaternion mean, arithmetic translation mean
  std::array<double, 3> translation_mean{};
  std::array<double, 3> translation_std{};
  EulerRPY rpy_mean;                    // branch with the smaller |roll| + |yaw|
  std::array<double, 3> rpy_std{};      // raw Euler angles, same branch as the mean
  std::array<double, 3> rotation_std{}; // deg, rotation-vector deviations from the mean in the mean's frame
  double max_translation_std() const;
  double max_rpy_std() const;
  double max_rotation_std() const;
};

TransformStats transform_stats(const std::vector<RigidTransform>& runs);

struct RepeatabilityResult {
  int runs = 0;
  std::vector<RigidTransform> h_cg;
  std::vector<RigidTransform> h_og;
  TransformStats cg;
  TransformStats og;
};

/// Independent calibrations with fresh poses and noise (streams run0, run1, ...).
RepeatabilityResult repeatability(const ScenarioConfig& cfg, int runs, int n_cam, int n_oct, ObservationMode mode,
                                  int threads = 0);

}  // namespace octcal
