#include <gtest/gtest.h>

#include "octcal/error.hpp"
#include "octcal/sim.hpp"

using namespace octcal;

TEST(Rng, StreamsAreKeyedBySeedNameAndIndex) {
  Rng a(7, "calib", 3), b(7, "calib", 3), c(7, "calib", 4), d(7, "other", 3), e(8, "calib", 3);
  const double first = a.normal();
  EXPECT_EQ(first, b.normal());
  EXPECT_NE(first, c.normal());
  EXPECT_NE(first, d.normal());
  EXPECT_NE(first, e.normal());
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform(2.0, 3.0);
    EXPECT_GE(u, 2.0);
    EXPECT_LT(u, 3.0);
    EXPECT_NEAR(a.unit_vector().norm(), 1.0, 1e-12);
  }
}

TEST(Scenario, DefaultsValidate) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.center_marker, 17);
  EXPECT_EQ(cfg.dims.x, 128);
}

TEST(Scenario, ValidateRejectsBadFields) {
  const auto rejects = [](auto edit) {
    ScenarioConfig cfg = ScenarioConfig::defaults();
    edit(cfg);
    try {
      cfg.validate();
    } catch (const Error& e) {
      return e.code() == ErrorCode::InvalidInput;
    }
    return false;
  };
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.center_marker = 35; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.noise.corner_px_sigma = -0.1; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.surface.radius = 0.0; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.dropout.cutoff_deg = 95.0; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.axial_sigma_voxels = 0.0; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.scan.alpha_steps = 0; }));
  EXPECT_TRUE(rejects([](ScenarioConfig& c) { c.true_h_cg = RigidTransform(2.0 * Mat3::Identity(), Vec3::Zero()); }));
}

TEST(Chain, RobotPoseForInvertsSensorPose) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  const auto poses = sample_calibration_poses(cfg, 6, PoseTarget::camera());
  for (const auto& robot : poses) {
    const RigidTransform back = robot_pose_for(cfg.board_pose_rw, cfg.true_h_cg, true_camera_pose(cfg, robot));
    EXPECT_LT(translation_error(back, robot), 1e-9);
    EXPECT_LT(rotation_error(back, robot), 1e-12);
    // board = robot * X * sensor
    const RigidTransform board = robot * cfg.true_h_og * true_probe_pose(cfg, robot);
    EXPECT_LT(translation_error(board, cfg.board_pose_rw), 1e-9);
  }
}

TEST(Sampling, PrefixIsStable) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  for (const PoseTarget& target : {PoseTarget::camera(), PoseTarget::oct(17)}) {
    const auto five = sample_calibration_poses(cfg, 5, target);
    const auto ten = sample_calibration_poses(cfg, 10, target);
    ASSERT_EQ(ten.size(), 10u);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(five[i].matrix(), ten[i].matrix());
  }
  EXPECT_TRUE(sample_calibration_poses(cfg, 0, PoseTarget::camera()).empty());
}

TEST(Sampling, CameraSeesWholeBoard) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  cfg.noise = NoiseConfig::zero();
  const auto poses = sample_calibration_poses(cfg, 20, PoseTarget::camera());
  const auto corners = checker_corners_cw(cfg.board);
  for (const auto& robot : poses) {
    Rng rng(1, "test");
    const CameraObservation obs = observe_camera(cfg, robot, rng);
    ASSERT_EQ(obs.px.size(), corners.size());
    const RigidTransform pose = true_camera_pose(cfg, robot);
    for (std::size_t i = 0; i < obs.px.size(); ++i) {
      const Vec2 expected = project_point(cfg.intrinsics, pose * corners[obs.corner_ids[i]]);
      EXPECT_LT((obs.px[i] - expected).norm(), 1e-9);
      EXPECT_GE(expected.x(), cfg.sampling.image_margin_px);
      EXPECT_LE(expected.x(), cfg.intrinsics.width - 1 - cfg.sampling.image_margin_px);
      EXPECT_GE(expected.y(), cfg.sampling.image_margin_px);
      EXPECT_LE(expected.y(), cfg.intrinsics.height - 1 - cfg.sampling.image_margin_px);
    }
  }
}

TEST(Sampling, ProbeKeepsTargetMarkerInVolume) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  const double width_x = cfg.dims.x * cfg.spacing.dx;
  const double width_y = cfg.dims.y * cfg.spacing.dy;
  const double depth = cfg.dims.z * cfg.spacing.dz;
  for (int marker : {0, 17, 34}) {
    const auto poses = sample_calibration_poses(cfg, 10, PoseTarget::oct(marker));
    for (const auto& robot : poses) {
      const RigidTransform pose = true_probe_pose(cfg, robot);
      for (const auto& c : marker_corners_cw(cfg.board, marker)) {
        const Vec3 p = pose * c;
        EXPECT_GT(p.x(), 0.0);
        EXPECT_LT(p.x(), width_x);
        EXPECT_GT(p.y(), 0.0);
        EXPECT_LT(p.y(), width_y);
        EXPECT_GT(p.z(), 0.0);
        EXPECT_LT(p.z(), depth);
      }
    }
  }
}

TEST(Noise, ZeroModelLeavesPoseUntouched) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  cfg.noise = NoiseConfig::zero();
  const RigidTransform pose = RigidTransform::from_rotation_vector({0.1, -0.2, 0.3}, {100.0, 20.0, 300.0});
  Rng rng(3, "robot");
  const RigidTransform p = perturb_robot_pose(cfg, pose, rng);
  EXPECT_LT(translation_error(p, pose), 1e-12);
  EXPECT_LT(rotation_error(p, pose), 1e-12);
}

TEST(Noise, RobotPerturbationHasConfiguredScale) {
  const ScenarioConfig cfg = ScenarioConfig::defaults();
  const RigidTransform pose;
  double t2 = 0.0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    Rng rng(3, "robot", static_cast<std::uint64_t>(i));
    t2 += perturb_robot_pose(cfg, pose, rng).translation().squaredNorm();
  }
  // Isotropic sigma per axis: E|t|^2 = 3 sigma^2.
  EXPECT_NEAR(std::sqrt(t2 / n / 3.0), cfg.noise.robot_trans_sigma, 0.1 * cfg.noise.robot_trans_sigma);
}

TEST(Render, CameraImageMatchesIntrinsicsSize) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  const auto poses = sample_calibration_poses(cfg, 1, PoseTarget::camera());
  Rng rng(1, "img");
  const Image img = render_camera_image(cfg, poses[0], rng);
  EXPECT_EQ(img.width(), cfg.intrinsics.width);
  EXPECT_EQ(img.height(), cfg.intrinsics.height);
}

TEST(Render, OctBoardPeaksAtSurfaceDepth) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  cfg.noise = NoiseConfig::zero();
  const auto poses = sample_calibration_poses(cfg, 1, PoseTarget::oct(17));
  Rng rng(1, "oct");
  const OctVolume v = render_oct_board(cfg, poses[0], rng);
  const RigidTransform probe_to_board = true_probe_pose(cfg, poses[0]).inverse();
  // Along the center A-scan the brightest voxel sits on the board plane.
  const int x = cfg.dims.x / 2, y = cfg.dims.y / 2;
  int arg = 0;
  for (int z = 1; z < cfg.dims.z; ++z) {
    if (v.at(z, x, y) > v.at(arg, x, y)) arg = z;
  }
  ASSERT_GT(v.at(arg, x, y), 0.0f);
  const Vec3 p = probe_to_board * v.voxel_position(arg, x, y);
  EXPECT_LT(std::abs(p.z()), cfg.spacing.dz);
}

TEST(Render, SphereOutOfViewThrows) {
  ScenarioConfig cfg = ScenarioConfig::defaults();
  Rng rng(1, "sphere");
  const RigidTransform far = RigidTransform::from_translation({-5000.0, 0.0, 0.0});
  try {
    render_oct_sphere(cfg, far, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SphereOutOfFov);
  }
  EXPECT_NO_THROW(render_oct_sphere(cfg, far, rng, true));
}
