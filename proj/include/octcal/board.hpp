#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "octcal/geom.hpp"
#include "octcal/image.hpp"

namespace octcal {

/// 4x4 payload, bit (row * 4 + col) set means a white cell. Rows run along
/// +y of the board frame, columns along +x.
using MarkerCode = std::uint16_t;

constexpr int kMarkerPayload = 4;
constexpr int kMarkerCells = kMarkerPayload + 2;  // payload plus one-cell black border

MarkerCode rotate_code(MarkerCode code);  // one quarter turn, see rotate_grid
int hamming(MarkerCode a, MarkerCode b);
/// Minimum Hamming distance between `a` and any rotation of `b`
/// (rotation 0 skipped when `skip_identity`).
int rotational_distance(MarkerCode a, MarkerCode b, bool skip_identity = false);

/// Deterministic greedy dictionary: every code differs from every rotation of
/// every other code (and from its own non-trivial rotations) in >= min_distance bits.
std::vector<MarkerCode> generate_dictionary(int count, int min_distance = 4);

/// ChArUco-style target: a cols x rows checkerboard with a square marker at
/// the center of every white square.
///
/// Board frame (CW): origin at the outer corner of square (0, 0), which is
/// white; x along columns, y along rows, z out of the printed face. Marker ids
/// are assigned row-major over the white squares.
struct BoardSpec {
  int cols = 10;
  int rows = 7;
  double square_edge = 10.0;  // mm
  double marker_edge = 5.0;   // mm
  double white_level = 0.9;
  double black_level = 0.4;
  double margin = 5.0;          // white border around the pattern, mm
  double surround_level = 0.25; // albedo beyond the margin
  std::vector<MarkerCode> dictionary;

  /// Default geometry with a freshly generated dictionary.
  static BoardSpec standard();

  int marker_count() const;
  int interior_corner_count() const { return (cols - 1) * (rows - 1); }
  double width() const { return cols * square_edge; }
  double height() const { return rows * square_edge; }
  /// Throws InvalidInput when the geometry or dictionary is inconsistent.
  void validate() const;
};

enum class FeatureKind { CheckerCorner, MarkerCorner };

struct BoardFeature {
  FeatureKind kind = FeatureKind::CheckerCorner;
  std::optional<int> marker_id;
  int corner_index = 0;  // marker corner 0..3, or checker corner index
  Vec3 position_cw = Vec3::Zero();
};

bool is_white_square(int col, int row);
/// Square (col, row) holding marker `id`; throws UnknownMarker.
std::array<int, 2> marker_square(const BoardSpec& spec, int id);
/// Marker id in square (col, row), or nullopt for black squares.
std::optional<int> marker_at_square(const BoardSpec& spec, int col, int row);
Vec2 marker_center_cw(const BoardSpec& spec, int id);

/// Corners in counter-clockwise order seen from +z, starting at the
/// (min x, min y) corner. Throws UnknownMarker.
std::array<Vec3, 4> marker_corners_cw(const BoardSpec& spec, int id);

/// (cols-1) x (rows-1) interior corners, row-major: index = j * (cols-1) + i
/// sits at ((i + 1) * edge, (j + 1) * edge, 0).
std::vector<Vec3> checker_corners_cw(const BoardSpec& spec);

std::vector<BoardFeature> board_features(const BoardSpec& spec);

/// 6x6 cell colors of marker `id` (true = white), indexed [row][col].
std::array<std::array<bool, kMarkerCells>, kMarkerCells> marker_cells(const BoardSpec& spec, int id);

/// Printed albedo at a point of the board plane.
double albedo_at(const BoardSpec& spec, double x, double y);

struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
};

/// Area-averaged rendering through an arbitrary affine pixel -> board map.
/// `pixel_to_cw` takes continuous pixel coordinates (u, v).
Image render_board_affine(const BoardSpec& spec, const Eigen::Affine2d& pixel_to_cw, int width, int height,
                          int supersample = 4);

/// Front view of a board region: u grows with x, v grows with -y (the way
/// the printed face looks to a sensor in front of it).
Image rasterize_patch(const BoardSpec& spec, const Rect& region_cw, double px_per_mm, int supersample = 4);

}  // namespace octcal
