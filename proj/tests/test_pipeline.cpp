#include <gtest/gtest.h>

#include "octcal/error.hpp"
#include "octcal/pipeline.hpp"

using namespace octcal;

namespace {

ScenarioConfig noiseless() {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  cfg.noise = NoiseConfig::zero();
  return cfg;
}

}  // namespace

TEST(Pipeline, AnalyticCalibrationIsExact) {
  const ScenarioConfig cfg = noiseless();
  const CalibrationData data = acquire_calibration_data(cfg, 10, 10, ObservationMode::Analytic, "exact");
  ASSERT_EQ(data.camera.size(), 10u);
  ASSERT_EQ(data.oct.size(), 10u);
  const CalibrationResult r = calibrate(data.camera, data.oct, cfg.board, cfg.intrinsics);
  EXPECT_LT(translation_error(r.h_cg, cfg.true_h_cg), 1e-6);
  EXPECT_LT(rad2deg(rotation_error(r.h_cg, cfg.true_h_cg)), 1e-6);
  EXPECT_LT(translation_error(r.h_og, cfg.true_h_og), 1e-6);
  EXPECT_LT(rad2deg(rotation_error(r.h_og, cfg.true_h_og)), 1e-6);
  EXPECT_EQ(r.camera_series.pairs.size(), 10u);
  EXPECT_EQ(r.oct_series.pairs.size(), 10u);
}

TEST(Pipeline, ProbePoseFromAnalyticCornersIsExact) {
  const ScenarioConfig cfg = noiseless();
  const auto poses = sample_calibration_poses(cfg, 3, PoseTarget::oct(17));
  for (const auto& robot : poses) {
    const OctMarkerObservation obs = analytic_oct_observation(cfg, robot, 17);
    const RigidFit fit = estimate_probe_pose({obs}, cfg.board);
    EXPECT_LT(translation_error(fit.transform, true_probe_pose(cfg, robot)), 1e-9);
    EXPECT_LT(fit.rms, 1e-9);
  }
}

TEST(Pipeline, RenderedVolumeCornersMatchAnalytic) {
  const ScenarioConfig cfg = noiseless();
  const auto poses = sample_calibration_poses(cfg, 2, PoseTarget::oct(17));
  for (std::size_t i = 0; i < poses.size(); ++i) {
    Rng rng(cfg.rng_seed, "render", i);
    const OctVolume v = render_oct_board(cfg, poses[i], rng);
    const auto found = process_oct_volume(v, cfg.board);
    const OctMarkerObservation truth = analytic_oct_observation(cfg, poses[i], 17);
    bool seen = false;
    for (const auto& m : found) {
      if (m.marker_id != 17) continue;
      seen = true;
      for (int k = 0; k < 4; ++k) EXPECT_LT((m.corners_o[k] - truth.corners_o[k]).norm(), cfg.spacing.diagonal());
    }
    EXPECT_TRUE(seen) << i;
  }
}

TEST(Pipeline, RenderedFramesIndependentOfThreadCount) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  const auto one = acquire_oct_frames(cfg, 2, 17, "threads", ObservationMode::Rendered, 1);
  const auto three = acquire_oct_frames(cfg, 2, 17, "threads", ObservationMode::Rendered, 3);
  ASSERT_EQ(one.size(), three.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].robot_reported.matrix(), three[i].robot_reported.matrix());
    ASSERT_EQ(one[i].markers.size(), three[i].markers.size());
    for (std::size_t m = 0; m < one[i].markers.size(); ++m) {
      EXPECT_EQ(one[i].markers[m].marker_id, three[i].markers[m].marker_id);
      for (int k = 0; k < 4; ++k) EXPECT_EQ(one[i].markers[m].corners_o[k], three[i].markers[m].corners_o[k]);
    }
  }
}

TEST(Pipeline, ReportedPoseCarriesRobotNoise) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  const auto frames = acquire_camera_frames(cfg, 5, "noise");
  double moved = 0.0;
  for (const auto& f : frames) moved += translation_error(f.robot_true, f.robot_reported);
  EXPECT_GT(moved, 0.0);
  EXPECT_LT(moved / frames.size(), 10.0 * cfg.noise.robot_trans_sigma);
}
