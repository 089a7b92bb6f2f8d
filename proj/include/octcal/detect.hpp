#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "octcal/board.hpp"
#include "octcal/image.hpp"

namespace octcal {

// Detection works on images of the printed face seen from the front (en-face
// projections, camera views, rasterize_patch output). In such views the board
// frame appears mirrored with respect to pixel axes, which fixes the corner
// winding used below.

struct BinarizeParams {
  int window = 0;        // odd side length; 0 picks min(width, height) / 8
  double offset = 0.05;  // intensity margin below the local mean
  bool invert = false;   // detect bright features on dark ground
};

/// 1 marks foreground (darker than the local mean by more than `offset`).
BinaryImage binarize(const Image& img, const BinarizeParams& params = {});

struct Quad {
  std::array<Vec2, 4> corners;
  double area = 0.0;
};

struct QuadParams {
  double min_area = 100.0;     // px^2
  double max_area = 1e12;      // px^2
  double min_fill = 0.9;       // quad area / hull area
  int border_margin = 1;       // components touching this band are dropped
  bool four_connected = false;
  double edge_offset = 0.5;    // push edges outward (pixel centers -> pixel edges)
};

/// Dark connected components whose outline is a convex quadrilateral.
std::vector<Quad> find_quads(const BinaryImage& bin, const QuadParams& params = {});

struct Detection {
  int marker_id = -1;
  std::array<Vec2, 4> corners_px;  // same order as marker_corners_cw
  double decode_confidence = 0.0;
};

enum class DecodeStatus { Ok, RejectBorder, RejectNoMatch };

struct DecodeResult {
  DecodeStatus status = DecodeStatus::RejectNoMatch;
  std::optional<Detection> detection;
};

struct DecodeParams {
  int hamming_tolerance = 0;
  double min_contrast = 0.15;
  int samples_per_cell = 3;  // per axis
};

DecodeResult decode_marker(const Image& img, const std::array<Vec2, 4>& quad, std::span<const MarkerCode> dictionary,
                           const DecodeParams& params = {});

struct RefinedCorner {
  Vec2 point = Vec2::Zero();
  bool converged = false;
};

/// Gradient-orthogonality corner refinement. Returns the input corner with
/// converged = false when the window is flat, the iteration limit is hit, or
/// the corner walks out of its window.
std::vector<RefinedCorner> refine_corners_subpixel(const Image& img, std::span<const Vec2> corners, int half_window,
                                                   int max_iterations = 50, double epsilon = 1e-4);

/// Fits a line to each side of a dark quad on a bright surround (subpixel
/// half-level crossings along the side normals) and intersects neighbouring
/// lines. Unlike refine_corners_subpixel this is not pulled inward by rounded
/// convex corners. Returns nullopt when a side has too few edge samples.
std::optional<std::array<Vec2, 4>> refine_quad_edges(const Image& img, const std::array<Vec2, 4>& quad,
                                                     int iterations = 2);

enum class CornerRefinement { None, Window, EdgeLines };

struct MarkerDetectParams {
  BinarizeParams binarize;
  QuadParams quads;
  DecodeParams decode;
  CornerRefinement refinement = CornerRefinement::EdgeLines;
  int refine_half_window = 4;  // for CornerRefinement::Window
};

/// binarize -> find_quads -> decode -> refine; one detection per id, sorted by id.
std::vector<Detection> detect_markers(const Image& img, std::span<const MarkerCode> dictionary,
                                      const MarkerDetectParams& params = {});

struct CheckerCorner {
  int index = 0;  // row-major, as checker_corners_cw
  Vec2 px = Vec2::Zero();
};

struct CheckerDetectParams {
  BinarizeParams binarize;
  double min_square_area = 40.0;
  double link_tolerance = 0.35;  // fraction of the square side
  double min_found_fraction = 0.8;
};

/// Interior checkerboard corners identified on the board lattice.
/// Throws BoardNotFound when fewer than min_found_fraction are recovered.
std::vector<CheckerCorner> detect_checker_corners(const Image& img, const BoardSpec& spec,
                                                  const CheckerDetectParams& params = {});

double signed_area(const std::array<Vec2, 4>& quad);

}  // namespace octcal
