#include <gtest/gtest.h>

#include <set>

#include "octcal/board.hpp"
#include "octcal/error.hpp"

using namespace octcal;

TEST(Board, StandardLayout) {
  const BoardSpec b = BoardSpec::standard();
  EXPECT_EQ(b.cols, 10);
  EXPECT_EQ(b.rows, 7);
  EXPECT_DOUBLE_EQ(b.square_edge, 10.0);
  EXPECT_EQ(b.marker_count(), 35);
  EXPECT_EQ(b.interior_corner_count(), 54);
  EXPECT_EQ(static_cast<int>(b.dictionary.size()), 35);
  EXPECT_NO_THROW(b.validate());
}

TEST(Board, MarkerIdsRunRowMajorOverWhiteSquares) {
  const BoardSpec b = BoardSpec::standard();
  int expected = 0;
  for (int row = 0; row < b.rows; ++row) {
    for (int col = 0; col < b.cols; ++col) {
      const auto id = marker_at_square(b, col, row);
      EXPECT_EQ(id.has_value(), is_white_square(col, row));
      if (!id) continue;
      EXPECT_EQ(*id, expected);
      const auto sq = marker_square(b, expected);
      EXPECT_EQ(sq[0], col);
      EXPECT_EQ(sq[1], row);
      ++expected;
    }
  }
  EXPECT_EQ(expected, 35);
}

TEST(Board, CenterMarkerPosition) {
  const BoardSpec b = BoardSpec::standard();
  const Vec2 c = marker_center_cw(b, 17);
  EXPECT_DOUBLE_EQ(c.x(), 55.0);
  EXPECT_DOUBLE_EQ(c.y(), 35.0);
}

TEST(Board, MarkerCornersFormCenteredSquare) {
  const BoardSpec b = BoardSpec::standard();
  for (int id = 0; id < b.marker_count(); ++id) {
    const auto c = marker_corners_cw(b, id);
    Vec3 mean = Vec3::Zero();
    for (const auto& p : c) {
      EXPECT_DOUBLE_EQ(p.z(), 0.0);
      mean += p / 4.0;
    }
    EXPECT_LT((mean.head<2>() - marker_center_cw(b, id)).norm(), 1e-12);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR((c[(k + 1) % 4] - c[k]).norm(), b.marker_edge, 1e-12);
    EXPECT_NEAR((c[2] - c[0]).norm(), b.marker_edge * std::sqrt(2.0), 1e-12);
  }
}

TEST(Board, CheckerCornersOnInteriorLattice) {
  const BoardSpec b = BoardSpec::standard();
  const auto corners = checker_corners_cw(b);
  ASSERT_EQ(corners.size(), 54u);
  EXPECT_EQ(corners.front(), Vec3(10.0, 10.0, 0.0));
  EXPECT_EQ(corners.back(), Vec3(90.0, 60.0, 0.0));
  EXPECT_EQ(corners[9], Vec3(10.0, 20.0, 0.0));  // row-major
}

TEST(Board, FeatureTable) {
  const BoardSpec b = BoardSpec::standard();
  const auto features = board_features(b);
  int checker = 0, marker = 0;
  for (const auto& f : features) {
    if (f.kind == FeatureKind::CheckerCorner) {
      ++checker;
      EXPECT_FALSE(f.marker_id.has_value());
    } else {
      ++marker;
      ASSERT_TRUE(f.marker_id.has_value());
      EXPECT_EQ(f.position_cw, marker_corners_cw(b, *f.marker_id)[f.corner_index]);
    }
  }
  EXPECT_EQ(checker, 54);
  EXPECT_EQ(marker, 35 * 4);
}

TEST(Board, UnknownMarkerThrows) {
  const BoardSpec b = BoardSpec::standard();
  for (int id : {-1, 35, 100}) {
    try {
      marker_square(b, id);
      FAIL() << id;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::UnknownMarker);
    }
  }
}

TEST(Dictionary, RotationHasOrderFour) {
  for (MarkerCode c : {MarkerCode{0x1234}, MarkerCode{0xBEEF}, MarkerCode{0x0001}}) {
    EXPECT_EQ(rotate_code(rotate_code(rotate_code(rotate_code(c)))), c);
  }
  EXPECT_EQ(hamming(0x000F, 0x00F0), 8);
}

TEST(Dictionary, CodesAreRotationallyDistinct) {
  const BoardSpec b = BoardSpec::standard();
  const auto& d = b.dictionary;
  std::set<MarkerCode> unique(d.begin(), d.end());
  EXPECT_EQ(unique.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    // A marker must not resemble its own rotations either, or its
    // orientation would be ambiguous.
    EXPECT_GE(rotational_distance(d[i], d[i], true), 4) << i;
    for (std::size_t j = i + 1; j < d.size(); ++j) EXPECT_GE(rotational_distance(d[i], d[j]), 4) << i << "," << j;
  }
}

TEST(Dictionary, GenerationIsDeterministic) {
  EXPECT_EQ(generate_dictionary(35, 4), BoardSpec::standard().dictionary);
}

TEST(Board, AlbedoFollowsCellsAndSquares) {
  const BoardSpec b = BoardSpec::standard();
  EXPECT_DOUBLE_EQ(albedo_at(b, 15.0, 5.0), b.black_level);    // square (1, 0) is black
  EXPECT_DOUBLE_EQ(albedo_at(b, 1.0, 1.0), b.white_level);     // white square outside its marker
  EXPECT_DOUBLE_EQ(albedo_at(b, -2.0, 10.0), b.white_level);   // margin
  EXPECT_DOUBLE_EQ(albedo_at(b, -20.0, 10.0), b.surround_level);
  const double cell = b.marker_edge / kMarkerCells;
  const Vec2 c = marker_center_cw(b, 17);
  const double x0 = c.x() - 0.5 * b.marker_edge, y0 = c.y() - 0.5 * b.marker_edge;
  const auto cells = marker_cells(b, 17);
  for (int r = 0; r < kMarkerCells; ++r) {
    for (int col = 0; col < kMarkerCells; ++col) {
      const double a = albedo_at(b, x0 + (col + 0.5) * cell, y0 + (r + 0.5) * cell);
      EXPECT_DOUBLE_EQ(a, cells[r][col] ? b.white_level : b.black_level) << r << "," << col;
      if (r == 0 || col == 0 || r == kMarkerCells - 1 || col == kMarkerCells - 1) EXPECT_FALSE(cells[r][col]);
    }
  }
}

TEST(Board, RasterizedPatchIsFrontView) {
  const BoardSpec b = BoardSpec::standard();
  // 10 px per mm over the 20 x 10 mm region holding squares (0,0) white and
  // (1,0) black. u grows with x, v grows with -y.
  const Image img = rasterize_patch(b, {0.0, 0.0, 20.0, 10.0}, 10.0);
  ASSERT_EQ(img.width(), 200);
  ASSERT_EQ(img.height(), 100);
  EXPECT_NEAR(img.at(150, 50), b.black_level, 1e-6);
  EXPECT_NEAR(img.at(5, 95), b.white_level, 1e-6);  // x = 0.5, y = 0.5
}

TEST(Board, ValidateRejectsOversizedMarker) {
  BoardSpec b = BoardSpec::standard();
  b.marker_edge = 12.0;
  EXPECT_THROW(b.validate(), Error);
}
