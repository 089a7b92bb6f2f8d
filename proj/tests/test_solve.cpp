#include <gtest/gtest.h>

#include <random>

#include "octcal/board.hpp"
#include "octcal/error.hpp"
#include "octcal/solve.hpp"

using namespace octcal;

namespace {

RigidTransform random_rotation(std::mt19937_64& rng, double max_deg, const Vec3& t) {
  std::normal_distribution<double> n;
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  const double angle = std::uniform_real_distribution<double>(0.0, deg2rad(max_deg))(rng);
  return RigidTransform::from_rotation_vector(axis * angle, t);
}

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n;
  return Vec3(n(rng), n(rng), n(rng)) * scale;
}

// Brown-Conrady written out term by term.
Vec2 brown_conrady(const std::array<double, 5>& d, const Vec2& p) {
  const double x = p.x(), y = p.y(), r2 = x * x + y * y;
  const double radial = 1.0 + d[0] * r2 + d[1] * r2 * r2 + d[4] * r2 * r2 * r2;
  return {x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x),
          y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y};
}

std::vector<PosePair> consistent_pairs(std::mt19937_64& rng, const RigidTransform& x, int n) {
  const RigidTransform board = RigidTransform::from_translation({400.0, 50.0, -20.0});
  std::vector<PosePair> out;
  for (int i = 0; i < n; ++i) {
    const RigidTransform robot = random_rotation(rng, 40.0, Vec3(350.0, 0.0, 300.0) + random_vec(rng, 30.0));
    out.push_back({robot, (robot * x).inverse() * board});
  }
  return out;
}

}  // namespace

TEST(Camera, DistortionMatchesClosedForm) {
  CameraIntrinsics k;
  k.distortion = {-0.1, 0.03, 0.002, -0.001, 0.004};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int i = 0; i < 100; ++i) {
    const Vec2 p(u(rng), u(rng));
    EXPECT_LT((distort_normalized(k, p) - brown_conrady(k.distortion, p)).norm(), 1e-14);
  }
}

TEST(Camera, UndistortInvertsProjection) {
  const CameraIntrinsics k;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(u(rng) * 300.0, u(rng) * 200.0, 300.0);
    const Vec2 px = project_point(k, p);
    EXPECT_LT((undistort_to_normalized(k, px) - p.head<2>() / p.z()).norm(), 1e-7);
  }
}

TEST(Camera, ValidateRejectsBadIntrinsics) {
  CameraIntrinsics k;
  EXPECT_NO_THROW(k.validate());
  k.fx = 0.0;
  EXPECT_THROW(k.validate(), Error);
  k = CameraIntrinsics{};
  k.cx = 900.0;
  EXPECT_THROW(k.validate(), Error);
}

TEST(Pnp, RecoversExactPose) {
  const CameraIntrinsics k;
  const BoardSpec b = BoardSpec::standard();
  std::vector<Vec3> object;
  for (const auto& f : board_features(b)) object.push_back(f.position_cw);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    // Board roughly 350 mm in front of the camera, facing it.
    const RigidTransform truth = RigidTransform::from_translation(Vec3(-50.0, -35.0, 350.0) + random_vec(rng, 10.0)) *
                                 random_rotation(rng, 25.0, Vec3::Zero());
    std::vector<Vec2> image;
    for (const auto& p : object) image.push_back(project_point(k, truth * p));
    const PoseEstimate est = pnp_planar(object, image, k);
    EXPECT_LT(translation_error(est.pose, truth), 1e-6);
    EXPECT_LT(rad2deg(rotation_error(est.pose, truth)), 1e-7);
    EXPECT_LT(est.mean_residual_px, 1e-6);
    for (std::size_t i = 1; i < est.objective_history.size(); ++i) {
      EXPECT_LE(est.objective_history[i], est.objective_history[i - 1]);
    }
  }
}

TEST(Pnp, DegenerateInputThrows) {
  const CameraIntrinsics k;
  const std::vector<Vec3> three{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
  const std::vector<Vec2> three_px{{400, 200}, {420, 200}, {400, 220}};
  const std::vector<Vec3> line{{0, 0, 0}, {10, 0, 0}, {20, 0, 0}, {30, 0, 0}};
  const std::vector<Vec2> line_px{{400, 200}, {410, 200}, {420, 200}, {430, 200}};
  for (const auto& [obj, px] : {std::pair{three, three_px}, std::pair{line, line_px}}) {
    try {
      pnp_planar(obj, px, k);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DegenerateConfiguration);
    }
  }
}

TEST(Register, ExactRigidMotion) {
  std::mt19937_64 rng(4);
  const RigidTransform truth = random_rotation(rng, 170.0, random_vec(rng, 20.0));
  std::vector<Vec3> object, measured;
  for (int i = 0; i < 8; ++i) {
    object.push_back(random_vec(rng, 10.0).cwiseProduct(Vec3(1.0, 1.0, 0.0)));
    measured.push_back(truth * object.back());
  }
  const RigidFit fit = register_3d3d(object, measured);
  EXPECT_LT(translation_error(fit.transform, truth), 1e-9);
  EXPECT_LT(rotation_error(fit.transform, truth), 1e-9);
}

TEST(MotionPairs, ConsecutivePlusStrideFive) {
  for (int n : {0, 1, 3, 6, 20, 35}) {
    const auto pairs = motion_pairs(n);
    int expected = 0;
    for (int i = 0; i < n; ++i)
      for (int k = i + 1; k < n; ++k) expected += (k - i == 1 || k - i == 5) ? 1 : 0;
    EXPECT_EQ(static_cast<int>(pairs.size()), expected) << n;
    for (const auto& p : pairs) EXPECT_TRUE(p[1] - p[0] == 1 || p[1] - p[0] == 5);
  }
  EXPECT_EQ(motion_pairs(20).size(), 34u);
  EXPECT_EQ(motion_pairs(35).size(), 64u);
}

TEST(HandEye, RecoversExactTransform) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const RigidTransform x = random_rotation(rng, 120.0, random_vec(rng, 50.0));
    const auto pairs = consistent_pairs(rng, x, 10 + trial);
    const HandEyeResult r = hand_eye_tsai_lenz(pairs);
    EXPECT_LT(translation_error(r.sensor_to_gripper, x), 1e-8);
    EXPECT_LT(rotation_error(r.sensor_to_gripper, x), 1e-10);
    EXPECT_EQ(r.motion_count, static_cast<int>(motion_pairs(10 + trial).size()));
    EXPECT_GT(r.translation_condition, 0.0);
    EXPECT_LE(r.translation_condition, 1.0);
  }
}

TEST(HandEye, TooFewPosesThrows) {
  std::mt19937_64 rng(6);
  const auto pairs = consistent_pairs(rng, RigidTransform(), 2);
  try {
    hand_eye_tsai_lenz(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientMotion);
  }
}

TEST(HandEye, ParallelAxesThrow) {
  // Every robot pose rotates about z only: the hand-eye rotation is not observable.
  const RigidTransform x = RigidTransform::from_rotation_vector({0.1, 0.2, 0.3}, {5.0, 0.0, 80.0});
  const RigidTransform board = RigidTransform::from_translation({400.0, 0.0, 0.0});
  std::vector<PosePair> pairs;
  for (int i = 0; i < 8; ++i) {
    const RigidTransform robot = RigidTransform::from_rotation_vector({0.0, 0.0, 0.1 * i}, {300.0 + i, 2.0 * i, 250.0});
    pairs.push_back({robot, (robot * x).inverse() * board});
  }
  try {
    hand_eye_tsai_lenz(pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientMotion);
  }
}

TEST(HandEye, ResidualsVanishAtTruthOnly) {
  std::mt19937_64 rng(7);
  const RigidTransform x = random_rotation(rng, 90.0, random_vec(rng, 40.0));
  const auto pairs = consistent_pairs(rng, x, 7);
  const ResidualReport at_truth = residual_diagnostics(pairs, x);
  ASSERT_EQ(at_truth.motions.size(), 21u);
  ASSERT_EQ(at_truth.pairs.size(), 7u);
  for (const auto& m : at_truth.motions) {
    EXPECT_LT(m.rotation_deg, 1e-6);
    EXPECT_LT(m.translation_mm, 1e-8);
  }
  const RigidTransform off = x * RigidTransform::from_translation({1.0, 0.0, 0.0});
  const ResidualReport shifted = residual_diagnostics(pairs, off);
  double worst = 0.0;
  for (const auto& p : shifted.pairs) worst = std::max(worst, p.translation_mm);
  EXPECT_GT(worst, 0.1);
  for (const auto& m : shifted.motions) EXPECT_LT(m.rotation_deg, 1e-6);
}
