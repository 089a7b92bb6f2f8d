#include "octcal/board.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "octcal/error.hpp"

namespace octcal {

MarkerCode rotate_code(MarkerCode code) {
  // out[r][c] = in[n-1-c][r]
  MarkerCode out = 0;
  constexpr int n = kMarkerPayload;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int src = (n - 1 - c) * n + r;
      if (code & (1u << src)) out |= static_cast<MarkerCode>(1u << (r * n + c));
    }
  }
  return out;
}

int hamming(MarkerCode a, MarkerCode b) { return std::popcount(static_cast<unsigned>(a ^ b)); }

int rotational_distance(MarkerCode a, MarkerCode b, bool skip_identity) {
  int best = 64;
  MarkerCode rb = b;
  for (int k = 0; k < 4; ++k) {
    if (!(skip_identity && k == 0)) best = std::min(best, hamming(a, rb));
    rb = rotate_code(rb);
  }
  return best;
}

std::vector<MarkerCode> generate_dictionary(int count, int min_distance) {
  std::vector<MarkerCode> codes;
  // Walk the 16-bit code space in a fixed scrambled order (odd multiplier is a
  // bijection mod 2^16) so the result never depends on a runtime RNG.
  for (std::uint32_t i = 0; i < 65536 && static_cast<int>(codes.size()) < count; ++i) {
    const auto code = static_cast<MarkerCode>((i * 40503u + 12345u) & 0xFFFFu);
    const int ones = std::popcount(static_cast<unsigned>(code));
    if (ones < 5 || ones > 11) continue;
    if (rotational_distance(code, code, true) < min_distance) continue;
    bool ok = true;
    for (MarkerCode other : codes) {
      if (rotational_distance(code, other) < min_distance) {
        ok = false;
        break;
      }
    }
    if (ok) codes.push_back(code);
  }
  if (static_cast<int>(codes.size()) < count) {
    throw Error(ErrorCode::InvalidInput, "cannot build a dictionary of " + std::to_string(count) + " markers");
  }
  return codes;
}

BoardSpec BoardSpec::standard() {
  BoardSpec spec;
  spec.dictionary = generate_dictionary(spec.marker_count());
  return spec;
}

int BoardSpec::marker_count() const { return (cols * rows + 1) / 2; }

void BoardSpec::validate() const {
  if (cols < 2 || rows < 2) throw Error(ErrorCode::InvalidInput, "board needs at least 2x2 squares");
  if (!(square_edge > 0.0) || !(marker_edge > 0.0) || marker_edge >= square_edge) {
    throw Error(ErrorCode::InvalidInput, "marker edge must be positive and smaller than the square edge");
  }
  if (static_cast<int>(dictionary.size()) < marker_count()) {
    throw Error(ErrorCode::InvalidInput, "dictionary smaller than the number of white squares");
  }
  for (std::size_t i = 0; i < dictionary.size(); ++i) {
    if (rotational_distance(dictionary[i], dictionary[i], true) == 0) {
      throw Error(ErrorCode::InvalidInput, "marker code is rotation-symmetric");
    }
    for (std::size_t j = i + 1; j < dictionary.size(); ++j) {
      if (rotational_distance(dictionary[i], dictionary[j]) == 0) {
        throw Error(ErrorCode::InvalidInput, "dictionary codes are rotation-ambiguous");
      }
    }
  }
}

bool is_white_square(int col, int row) { return (col + row) % 2 == 0; }

std::array<int, 2> marker_square(const BoardSpec& spec, int id) {
  if (id < 0 || id >= spec.marker_count()) {
    throw Error(ErrorCode::UnknownMarker, "marker id " + std::to_string(id));
  }
  int seen = 0;
  for (int r = 0; r < spec.rows; ++r) {
    for (int c = 0; c < spec.cols; ++c) {
      if (!is_white_square(c, r)) continue;
      if (seen == id) return {c, r};
      ++seen;
    }
  }
  throw Error(ErrorCode::UnknownMarker, "marker id " + std::to_string(id));
}

std::optional<int> marker_at_square(const BoardSpec& spec, int col, int row) {
  if (col < 0 || row < 0 || col >= spec.cols || row >= spec.rows || !is_white_square(col, row)) {
    return std::nullopt;
  }
  // White squares before row `row` plus those to the left in the same row.
  int id = 0;
  for (int r = 0; r < row; ++r) id += (spec.cols + ((r % 2 == 0) ? 1 : 0)) / 2;
  id += col / 2;
  return id;
}

Vec2 marker_center_cw(const BoardSpec& spec, int id) {
  const auto [c, r] = marker_square(spec, id);
  return {(c + 0.5) * spec.square_edge, (r + 0.5) * spec.square_edge};
}

std::array<Vec3, 4> marker_corners_cw(const BoardSpec& spec, int id) {
  const Vec2 center = marker_center_cw(spec, id);
  const double h = 0.5 * spec.marker_edge;
  return {Vec3(center.x() - h, center.y() - h, 0.0), Vec3(center.x() + h, center.y() - h, 0.0),
          Vec3(center.x() + h, center.y() + h, 0.0), Vec3(center.x() - h, center.y() + h, 0.0)};
}

std::vector<Vec3> checker_corners_cw(const BoardSpec& spec) {
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(spec.interior_corner_count()));
  for (int j = 1; j < spec.rows; ++j) {
    for (int i = 1; i < spec.cols; ++i) out.emplace_back(i * spec.square_edge, j * spec.square_edge, 0.0);
  }
  return out;
}

std::vector<BoardFeature> board_features(const BoardSpec& spec) {
  std::vector<BoardFeature> out;
  const auto checker = checker_corners_cw(spec);
  for (std::size_t i = 0; i < checker.size(); ++i) {
    out.push_back({FeatureKind::CheckerCorner, std::nullopt, static_cast<int>(i), checker[i]});
  }
  for (int id = 0; id < spec.marker_count(); ++id) {
    const auto corners = marker_corners_cw(spec, id);
    for (int k = 0; k < 4; ++k) out.push_back({FeatureKind::MarkerCorner, id, k, corners[k]});
  }
  return out;
}

std::array<std::array<bool, kMarkerCells>, kMarkerCells> marker_cells(const BoardSpec& spec, int id) {
  marker_square(spec, id);  // validates id
  if (id >= static_cast<int>(spec.dictionary.size())) {
    throw Error(ErrorCode::UnknownMarker, "dictionary has no code for id " + std::to_string(id));
  }
  const MarkerCode code = spec.dictionary[id];
  std::array<std::array<bool, kMarkerCells>, kMarkerCells> cells{};
  for (int r = 1; r <= kMarkerPayload; ++r) {
    for (int c = 1; c <= kMarkerPayload; ++c) {
      cells[r][c] = (code >> ((r - 1) * kMarkerPayload + (c - 1))) & 1u;
    }
  }
  return cells;
}

double albedo_at(const BoardSpec& spec, double x, double y) {
  const double w = spec.width();
  const double h = spec.height();
  if (x < 0.0 || y < 0.0 || x >= w || y >= h) {
    const bool in_margin = x >= -spec.margin && y >= -spec.margin && x < w + spec.margin && y < h + spec.margin;
    return in_margin ? spec.white_level : spec.surround_level;
  }
  const int col = static_cast<int>(x / spec.square_edge);
  const int row = static_cast<int>(y / spec.square_edge);
  if (!is_white_square(col, row)) return spec.black_level;

  const double half = 0.5 * spec.marker_edge;
  const double lx = x - ((col + 0.5) * spec.square_edge - half);
  const double ly = y - ((row + 0.5) * spec.square_edge - half);
  if (lx < 0.0 || ly < 0.0 || lx >= spec.marker_edge || ly >= spec.marker_edge) return spec.white_level;

  const double cell = spec.marker_edge / kMarkerCells;
  const int mc = std::min(static_cast<int>(lx / cell), kMarkerCells - 1);
  const int mr = std::min(static_cast<int>(ly / cell), kMarkerCells - 1);
  if (mc == 0 || mr == 0 || mc == kMarkerCells - 1 || mr == kMarkerCells - 1) return spec.black_level;
  const int id = *marker_at_square(spec, col, row);
  const MarkerCode code = spec.dictionary.at(static_cast<std::size_t>(id));
  const bool white = (code >> ((mr - 1) * kMarkerPayload + (mc - 1))) & 1u;
  return white ? spec.white_level : spec.black_level;
}

Image render_board_affine(const BoardSpec& spec, const Eigen::Affine2d& pixel_to_cw, int width, int height,
                          int supersample) {
  Image img(width, height);
  const int s = std::max(1, supersample);
  const double inv = 1.0 / (s * s);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      double acc = 0.0;
      for (int sv = 0; sv < s; ++sv) {
        for (int su = 0; su < s; ++su) {
          const Vec2 px(u - 0.5 + (su + 0.5) / s, v - 0.5 + (sv + 0.5) / s);
          const Vec2 q = pixel_to_cw * px;
          acc += albedo_at(spec, q.x(), q.y());
        }
      }
      img.at(u, v) = static_cast<float>(acc * inv);
    }
  }
  return img;
}

Image rasterize_patch(const BoardSpec& spec, const Rect& region_cw, double px_per_mm, int supersample) {
  if (!(px_per_mm > 0.0) || region_cw.x_max <= region_cw.x_min || region_cw.y_max <= region_cw.y_min) {
    throw Error(ErrorCode::InvalidInput, "empty patch region or resolution");
  }
  const int width = static_cast<int>(std::lround((region_cw.x_max - region_cw.x_min) * px_per_mm));
  const int height = static_cast<int>(std::lround((region_cw.y_max - region_cw.y_min) * px_per_mm));
  Eigen::Affine2d map = Eigen::Affine2d::Identity();
  map.linear() << 1.0 / px_per_mm, 0.0, 0.0, -1.0 / px_per_mm;
  map.translation() << region_cw.x_min + 0.5 / px_per_mm, region_cw.y_max - 0.5 / px_per_mm;
  return render_board_affine(spec, map, std::max(width, 1), std::max(height, 1), supersample);
}

}  // namespace octcal
