#include <gtest/gtest.h>

#include <random>

#include "octcal/board.hpp"
#include "octcal/detect.hpp"
#include "octcal/error.hpp"

using namespace octcal;

namespace {

struct View {
  Image image;
  Eigen::Affine2d pixel_to_cw;
  Vec2 to_pixel(const Vec3& p) const { return pixel_to_cw.inverse() * p.head<2>(); }
};

// Front view of the board centered on `center`, rotated in plane.
View front_view(const BoardSpec& b, const Vec2& center, double angle_deg, double px_per_mm, int size) {
  Eigen::Matrix2d lin = Eigen::Rotation2Dd(deg2rad(angle_deg)).toRotationMatrix() * Eigen::Vector2d(1.0, -1.0).asDiagonal();
  lin /= px_per_mm;
  Eigen::Affine2d a = Eigen::Affine2d::Identity();
  a.linear() = lin;
  a.translation() = center - lin * Vec2(0.5 * (size - 1), 0.5 * (size - 1));
  return {render_board_affine(b, a, size, size), a};
}

}  // namespace

TEST(Binarize, MarksDarkRegion) {
  Image img(40, 40, 0.9f);
  for (int v = 10; v < 20; ++v)
    for (int u = 10; u < 20; ++u) img.at(u, v) = 0.3f;
  BinarizeParams p;
  p.window = 15;
  const BinaryImage bin = binarize(img, p);
  EXPECT_EQ(bin.at(15, 15), 1);
  EXPECT_EQ(bin.at(30, 30), 0);
  p.invert = true;
  EXPECT_EQ(binarize(img, p).at(15, 15), 0);
}

TEST(Quads, FindsDarkSquare) {
  Image img(60, 60, 0.9f);
  for (int v = 20; v < 40; ++v)
    for (int u = 15; u < 35; ++u) img.at(u, v) = 0.3f;
  BinarizeParams bp;
  bp.window = 31;
  const auto quads = find_quads(binarize(img, bp));
  ASSERT_EQ(quads.size(), 1u);
  // Pixel edges of the square are at u = 14.5 / 34.5 and v = 19.5 / 39.5.
  EXPECT_NEAR(quads[0].area, 400.0, 40.0);
  for (const auto& c : quads[0].corners) {
    const double du = std::min(std::abs(c.x() - 14.5), std::abs(c.x() - 34.5));
    const double dv = std::min(std::abs(c.y() - 19.5), std::abs(c.y() - 39.5));
    EXPECT_LT(du, 1.0);
    EXPECT_LT(dv, 1.0);
  }
}

TEST(Quads, SignedAreaFollowsWinding) {
  const std::array<Vec2, 4> ccw{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
  const std::array<Vec2, 4> cw{Vec2(0, 0), Vec2(0, 1), Vec2(1, 1), Vec2(1, 0)};
  EXPECT_DOUBLE_EQ(signed_area(ccw), 1.0);
  EXPECT_DOUBLE_EQ(signed_area(cw), -1.0);
}

TEST(Markers, EveryIdDecodesAtAnyRotation) {
  const BoardSpec b = BoardSpec::standard();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> angle(-180.0, 180.0);
  for (int id = 0; id < b.marker_count(); ++id) {
    const View view = front_view(b, marker_center_cw(b, id), angle(rng), 12.8, 128);
    const auto found = detect_markers(view.image, b.dictionary);
    ASSERT_EQ(found.size(), 1u) << id;
    EXPECT_EQ(found[0].marker_id, id);
    const auto truth = marker_corners_cw(b, id);
    for (int k = 0; k < 4; ++k) EXPECT_LT((found[0].corners_px[k] - view.to_pixel(truth[k])).norm(), 0.15) << id;
    EXPECT_GT(found[0].decode_confidence, 0.5);
  }
}

TEST(Markers, RefinementModesAgreeOnCleanImage) {
  const BoardSpec b = BoardSpec::standard();
  const View view = front_view(b, marker_center_cw(b, 12), 17.0, 12.8, 128);
  const auto truth = marker_corners_cw(b, 12);
  for (CornerRefinement mode : {CornerRefinement::None, CornerRefinement::Window, CornerRefinement::EdgeLines}) {
    MarkerDetectParams p;
    p.refinement = mode;
    const auto found = detect_markers(view.image, b.dictionary, p);
    ASSERT_EQ(found.size(), 1u);
    const double tol = mode == CornerRefinement::EdgeLines ? 0.15 : 1.0;
    for (int k = 0; k < 4; ++k) EXPECT_LT((found[0].corners_px[k] - view.to_pixel(truth[k])).norm(), tol);
  }
}

TEST(Markers, PlainBlackSquareIsRejected) {
  const BoardSpec b = BoardSpec::standard();
  // Square (1, 0) is black; a quad around it carries no marker border.
  const View view = front_view(b, Vec2(15.0, 5.0), 0.0, 6.0, 96);
  std::array<Vec2, 4> quad;
  const Vec3 corners[4] = {{10, 0, 0}, {20, 0, 0}, {20, 10, 0}, {10, 10, 0}};
  for (int k = 0; k < 4; ++k) quad[k] = view.to_pixel(corners[k]);
  const DecodeResult r = decode_marker(view.image, quad, b.dictionary);
  EXPECT_NE(r.status, DecodeStatus::Ok);
  EXPECT_FALSE(r.detection.has_value());
}

TEST(Corners, WindowRefinementConvergesOnCheckerCorner) {
  const BoardSpec b = BoardSpec::standard();
  const View view = front_view(b, Vec2(30.0, 30.0), 10.0, 8.0, 96);
  const Vec2 truth = view.to_pixel(Vec3(30.0, 30.0, 0.0));
  const std::vector<Vec2> start{truth + Vec2(1.2, -0.9)};
  const auto refined = refine_corners_subpixel(view.image, start, 5);
  ASSERT_EQ(refined.size(), 1u);
  EXPECT_TRUE(refined[0].converged);
  EXPECT_LT((refined[0].point - truth).norm(), 0.1);
}

TEST(Corners, FlatWindowDoesNotConverge) {
  const Image flat(40, 40, 0.5f);
  const std::vector<Vec2> start{Vec2(20.0, 20.0)};
  const auto refined = refine_corners_subpixel(flat, start, 4);
  EXPECT_FALSE(refined[0].converged);
  EXPECT_EQ(refined[0].point, start[0]);
}

TEST(Checker, FindsAllInteriorCorners) {
  const BoardSpec b = BoardSpec::standard();
  const View view = front_view(b, Vec2(50.0, 35.0), 8.0, 5.0, 640);
  const auto corners = detect_checker_corners(view.image, b);
  ASSERT_EQ(corners.size(), 54u);
  const auto truth = checker_corners_cw(b);
  for (const auto& c : corners) EXPECT_LT((c.px - view.to_pixel(truth[c.index])).norm(), 0.3) << c.index;
}

TEST(Checker, BlankImageThrows) {
  const BoardSpec b = BoardSpec::standard();
  EXPECT_THROW(detect_checker_corners(Image(200, 200, 0.8f), b), Error);
}
