#include <gtest/gtest.h>

#include <random>

#include "octcal/error.hpp"
#include "octcal/geom.hpp"

using namespace octcal;

namespace {

RigidTransform random_transform(std::mt19937_64& rng, double trans_scale = 50.0) {
  std::normal_distribution<double> n;
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  std::uniform_real_distribution<double> angle(0.0, kPi * 0.999);
  return RigidTransform::from_rotation_vector(axis * angle(rng), Vec3(n(rng), n(rng), n(rng)) * trans_scale);
}

Mat3 rx(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitX()).toRotationMatrix(); }
Mat3 ry(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitY()).toRotationMatrix(); }
Mat3 rz(double deg) { return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace

TEST(RigidTransform, CompositionAppliesRightOperandFirst) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a = random_transform(rng), b = random_transform(rng);
    const Vec3 p(1.0, -2.0, 3.0);
    EXPECT_LT(((a * b) * p - a * (b * p)).norm(), 1e-9);
    EXPECT_LT(((a * b).matrix() - a.matrix() * b.matrix()).norm(), 1e-9);
  }
}

TEST(RigidTransform, InverseUndoesTransform) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform t = random_transform(rng);
    const RigidTransform id = t * t.inverse();
    EXPECT_LT(rotation_angle(id.rotation()), 1e-12);
    EXPECT_LT(id.translation().norm(), 1e-10);
    EXPECT_TRUE(t.is_valid());
  }
}

TEST(RigidTransform, RowMajorRoundTrip) {
  std::mt19937_64 rng(3);
  const RigidTransform t = random_transform(rng);
  const auto values = t.row_major();
  EXPECT_DOUBLE_EQ(values[3], t.translation().x());
  EXPECT_DOUBLE_EQ(values[15], 1.0);
  const RigidTransform back = RigidTransform::from_row_major(values);
  EXPECT_EQ(back.matrix(), t.matrix());
}

TEST(RigidTransform, QuaternionRoundTrip) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = random_transform(rng);
    const RigidTransform back = RigidTransform::from_quaternion(t.quaternion(), t.translation());
    EXPECT_LT((back.matrix() - t.matrix()).norm(), 1e-12);
  }
}

TEST(RigidTransform, OrthonormalizeRepairsSmallDrift) {
  Mat3 r = rz(30.0);
  r(0, 1) += 1e-7;
  const RigidTransform drifted(r, Vec3::Zero());
  EXPECT_FALSE(drifted.is_valid(1e-9));
  EXPECT_GT(drifted.orthonormality_error(), 1e-8);
  EXPECT_TRUE(drifted.orthonormalized().is_valid(1e-12));
}

TEST(Rotation, VectorMatchesAngleAxis) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int i = 0; i < 200; ++i) {
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    const double angle = std::uniform_real_distribution<double>(1e-6, kPi - 1e-6)(rng);
    const Mat3 expected = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    EXPECT_LT((rotation_from_vector(axis * angle) - expected).norm(), 1e-12);
    EXPECT_LT((rotation_to_vector(expected) - axis * angle).norm(), 1e-9);
    EXPECT_NEAR(rotation_angle(expected), angle, 1e-9);
  }
  EXPECT_LT((rotation_from_vector(Vec3::Zero()) - Mat3::Identity()).norm(), 1e-15);
  EXPECT_LT(rotation_to_vector(Mat3::Identity()).norm(), 1e-15);
}

TEST(Rotation, VectorNearHalfTurn) {
  const Vec3 axis = Vec3(1.0, 2.0, -0.5).normalized();
  const Mat3 r = Eigen::AngleAxisd(kPi, axis).toRotationMatrix();
  const Vec3 v = rotation_to_vector(r);
  EXPECT_NEAR(v.norm(), kPi, 1e-9);
  EXPECT_LT((rotation_from_vector(v) - r).norm(), 1e-9);
}

TEST(Rotation, SkewIsCrossProduct) {
  const Vec3 a(1.0, -2.0, 0.5), b(0.3, 4.0, -1.0);
  EXPECT_LT((skew(a) * b - a.cross(b)).norm(), 1e-15);
}

TEST(Rotation, ProjectToRotationGivesProperRotation) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  for (int i = 0; i < 50; ++i) {
    Mat3 m = random_transform(rng).rotation();
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) += 0.01 * n(rng);
    const Mat3 r = project_to_rotation(m);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(Rotation, ErrorsAreSymmetricGeodesics) {
  const RigidTransform a(rz(10.0), Vec3(1.0, 2.0, 3.0));
  const RigidTransform b(rz(10.0) * rx(3.0), Vec3(1.0, 2.0, 7.0));
  EXPECT_NEAR(rad2deg(rotation_error(a, b)), 3.0, 1e-9);
  EXPECT_NEAR(rotation_error(a, b), rotation_error(b, a), 1e-15);
  EXPECT_NEAR(translation_error(a, b), 4.0, 1e-12);
}

TEST(Euler, MatchesElementaryRotationProduct) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-179.0, 179.0), p(-89.0, 89.0);
  for (int i = 0; i < 200; ++i) {
    const EulerRPY e{u(rng), p(rng), u(rng)};
    const Mat3 expected = rz(e.yaw) * ry(e.pitch) * rx(e.roll);
    EXPECT_LT((rotation_from_rpy(e) - expected).norm(), 1e-12);
    const EulerRPY back = rpy_from_rotation(expected);
    EXPECT_NEAR(back.roll, e.roll, 1e-8);
    EXPECT_NEAR(back.pitch, e.pitch, 1e-8);
    EXPECT_NEAR(back.yaw, e.yaw, 1e-8);
  }
}

TEST(Euler, AlternateBranchDescribesSameRotation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-179.0, 179.0), p(-89.0, 89.0);
  for (int i = 0; i < 100; ++i) {
    const EulerRPY e{u(rng), p(rng), u(rng)};
    const EulerRPY alt = alternate_rpy(e);
    EXPECT_LT((rotation_from_rpy(alt) - rotation_from_rpy(e)).norm(), 1e-12);
    EXPECT_GT(std::abs(alt.pitch), 90.0 - 1e-9);
  }
}

TEST(Euler, ProbeMountBeyondNinetyDegreesPitch) {
  // The default probe mount has pitch 91.55 deg; the principal branch reports
  // its mirror (pitch 88.45) and the alternate branch recovers the original.
  const EulerRPY mount{0.27, 91.55, -0.42};
  const EulerRPY principal = rpy_from_rotation(rotation_from_rpy(mount));
  EXPECT_NEAR(principal.pitch, 88.45, 1e-9);
  const EulerRPY alt = alternate_rpy(principal);
  EXPECT_NEAR(alt.roll, 0.27, 1e-9);
  EXPECT_NEAR(alt.pitch, 91.55, 1e-9);
  EXPECT_NEAR(alt.yaw, -0.42, 1e-9);
}

TEST(Euler, GimbalLockThrows) {
  try {
    rpy_from_rotation(rotation_from_rpy({10.0, 90.0, 20.0}));
    FAIL() << "expected GimbalLock";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GimbalLock);
  }
}

TEST(Euler, WrapDegrees) {
  EXPECT_DOUBLE_EQ(wrap_degrees(190.0), -170.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(-190.0), 170.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(180.0), 180.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(-180.0), 180.0);
  EXPECT_DOUBLE_EQ(wrap_degrees(720.0 + 5.0), 5.0);
}

TEST(Umeyama, RecoversExactTransform) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 100; ++trial) {
    const RigidTransform truth = random_transform(rng);
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 3 + trial % 6; ++i) {
      src.emplace_back(n(rng) * 10.0, n(rng) * 10.0, n(rng) * 10.0);
      dst.push_back(truth * src.back());
    }
    const RigidFit fit = umeyama_fit(src, dst);
    EXPECT_LT(rotation_error(fit.transform, truth), 1e-9);
    EXPECT_LT(translation_error(fit.transform, truth), 1e-8);
    EXPECT_LT(fit.rms, 1e-8);
  }
}

TEST(Umeyama, NeverReturnsReflection) {
  // A mirrored point set: the best proper rotation still has det +1.
  std::vector<Vec3> src{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.emplace_back(p.x(), p.y(), -p.z());
  const RigidFit fit = umeyama_fit(src, dst);
  EXPECT_NEAR(fit.transform.rotation().determinant(), 1.0, 1e-12);
  EXPECT_NEAR(fit.rms, rms_residual(fit.transform, src, dst), 1e-12);
}

TEST(Umeyama, RejectsBadInput) {
  const std::vector<Vec3> three{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  try {
    umeyama_fit(three, two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  try {
    umeyama_fit(line, line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateGeometry);
  }
}

TEST(ErrorCodes, MessageCarriesCodeName) {
  const Error e(ErrorCode::EmptyCloud, "nothing");
  EXPECT_EQ(std::string(e.what()), "EmptyCloud: nothing");
  EXPECT_EQ(to_string(ErrorCode::MissingData), "MissingData");
}
