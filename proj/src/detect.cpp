#include "octcal/detect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "octcal/error.hpp"

namespace octcal {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Vec2& p = pts[i - 1];
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], p - hull[k - 2]) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

/// Four hull vertices: the farthest pair, then the farthest point on each side.
std::optional<std::array<Vec2, 4>> quad_from_hull(const std::vector<Vec2>& hull) {
  if (hull.size() < 4) return std::nullopt;
  std::size_t ia = 0;
  std::size_t ic = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      const double d = (hull[i] - hull[j]).squaredNorm();
      if (d > best) {
        best = d;
        ia = i;
        ic = j;
      }
    }
  }
  const Vec2 a = hull[ia];
  const Vec2 c = hull[ic];
  double left = 0.0;
  double right = 0.0;
  std::optional<Vec2> b;
  std::optional<Vec2> d;
  for (const auto& p : hull) {
    const double s = cross2(c - a, p - a);
    if (s > left) {
      left = s;
      b = p;
    }
    if (s < right) {
      right = s;
      d = p;
    }
  }
  if (!b || !d) return std::nullopt;
  return std::array<Vec2, 4>{a, *b, c, *d};
}

std::optional<Vec2> intersect_lines(const Vec2& p1, const Vec2& d1, const Vec2& p2, const Vec2& d2) {
  const double den = cross2(d1, d2);
  if (std::abs(den) < 1e-12) return std::nullopt;
  const double t = cross2(p2 - p1, d2) / den;
  return p1 + t * d1;
}

/// Moves every edge of a convex quad outward by `offset` pixels.
std::array<Vec2, 4> offset_quad(const std::array<Vec2, 4>& q, double offset) {
  if (offset == 0.0) return q;
  const double orient = signed_area(q) > 0.0 ? 1.0 : -1.0;
  std::array<Vec2, 4> pts{};
  std::array<Vec2, 4> dirs{};
  for (int i = 0; i < 4; ++i) {
    const Vec2 d = (q[(i + 1) % 4] - q[i]).normalized();
    // Outward normal for a positively oriented polygon is (dy, -dx).
    const Vec2 n = orient * Vec2(d.y(), -d.x());
    pts[i] = q[i] + offset * n;
    dirs[i] = d;
  }
  std::array<Vec2, 4> out = q;
  for (int i = 0; i < 4; ++i) {
    const int prev = (i + 3) % 4;
    if (auto x = intersect_lines(pts[prev], dirs[prev], pts[i], dirs[i])) out[i] = *x;
  }
  return out;
}

bool is_convex(const std::array<Vec2, 4>& q) {
  int sign = 0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross2(q[(i + 1) % 4] - q[i], q[(i + 2) % 4] - q[(i + 1) % 4]);
    const int s = c > 0.0 ? 1 : (c < 0.0 ? -1 : 0);
    if (s == 0) return false;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

/// Homography mapping src[i] -> dst[i] for four correspondences.
Mat3 homography4(const std::array<Vec2, 4>& src, const std::array<Vec2, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    const double x = src[i].x();
    const double y = src[i].y();
    const double u = dst[i].x();
    const double v = dst[i].y();
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = a.fullPivLu().solve(b);
  Mat3 H;
  H << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return H;
}

Vec2 apply_h(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

struct Component {
  std::vector<Vec2> boundary;
  std::size_t pixels = 0;
  bool touches_border = false;
};

std::vector<Component> label_components(const BinaryImage& bin, int border_margin, bool four_connected) {
  const int w = bin.width();
  const int h = bin.height();
  Grid2<int> label(w, h, -1);
  std::vector<Component> comps;
  std::vector<std::pair<int, int>> stack;
  static constexpr int kDu8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDv8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int nbrs = four_connected ? 4 : 8;
  for (int v0 = 0; v0 < h; ++v0) {
    for (int u0 = 0; u0 < w; ++u0) {
      if (!bin.at(u0, v0) || label.at(u0, v0) >= 0) continue;
      const int id = static_cast<int>(comps.size());
      comps.emplace_back();
      Component& comp = comps.back();
      stack.clear();
      stack.emplace_back(u0, v0);
      label.at(u0, v0) = id;
      while (!stack.empty()) {
        const auto [u, v] = stack.back();
        stack.pop_back();
        ++comp.pixels;
        if (u < border_margin || v < border_margin || u >= w - border_margin || v >= h - border_margin) {
          comp.touches_border = true;
        }
        bool boundary = false;
        for (int k = 0; k < 4; ++k) {
          const int uu = u + kDu8[k];
          const int vv = v + kDv8[k];
          if (!bin.contains(uu, vv) || !bin.at(uu, vv)) boundary = true;
        }
        if (boundary) comp.boundary.emplace_back(u, v);
        for (int k = 0; k < nbrs; ++k) {
          const int uu = u + kDu8[k];
          const int vv = v + kDv8[k];
          if (!bin.contains(uu, vv) || !bin.at(uu, vv) || label.at(uu, vv) >= 0) continue;
          label.at(uu, vv) = id;
          stack.emplace_back(uu, vv);
        }
      }
    }
  }
  return comps;
}

BinaryImage erode(const BinaryImage& bin) {
  BinaryImage out(bin.width(), bin.height(), 0);
  for (int v = 0; v < bin.height(); ++v) {
    for (int u = 0; u < bin.width(); ++u) {
      if (!bin.at(u, v)) continue;
      bool keep = true;
      for (int dv = -1; dv <= 1 && keep; ++dv) {
        for (int du = -1; du <= 1; ++du) {
          if (!bin.contains(u + du, v + dv) || !bin.at(u + du, v + dv)) {
            keep = false;
            break;
          }
        }
      }
      out.at(u, v) = keep ? 1 : 0;
    }
  }
  return out;
}

}  // namespace

double signed_area(const std::array<Vec2, 4>& quad) { return polygon_area(quad); }

BinaryImage binarize(const Image& img, const BinarizeParams& params) {
  const int w = img.width();
  const int h = img.height();
  BinaryImage out(w, h, 0);
  if (w == 0 || h == 0) return out;
  int win = params.window > 0 ? params.window : std::min(w, h) / 8;
  if (win % 2 == 0) ++win;
  win = std::max(win, 3);
  const int r = win / 2;

  // Summed-area table in double for exact symmetric behaviour under inversion.
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto s = [&](int u, int v) -> double& { return sat[static_cast<std::size_t>(v) * (w + 1) + u]; };
  for (int v = 0; v < h; ++v) {
    double row = 0.0;
    for (int u = 0; u < w; ++u) {
      row += img.at(u, v);
      s(u + 1, v + 1) = s(u + 1, v) + row;
    }
  }
  for (int v = 0; v < h; ++v) {
    const int v0 = std::max(v - r, 0);
    const int v1 = std::min(v + r + 1, h);
    for (int u = 0; u < w; ++u) {
      const int u0 = std::max(u - r, 0);
      const int u1 = std::min(u + r + 1, w);
      const double sum = s(u1, v1) - s(u0, v1) - s(u1, v0) + s(u0, v0);
      const double mean = sum / ((u1 - u0) * (v1 - v0));
      const double val = img.at(u, v);
      const bool fg = params.invert ? (val > mean + params.offset) : (val < mean - params.offset);
      out.at(u, v) = fg ? 1 : 0;
    }
  }
  return out;
}

std::vector<Quad> find_quads(const BinaryImage& bin, const QuadParams& params) {
  std::vector<Quad> quads;
  for (const Component& comp : label_components(bin, params.border_margin, params.four_connected)) {
    if (comp.touches_border || static_cast<double>(comp.pixels) < 0.25 * params.min_area) continue;
    const auto hull = convex_hull(comp.boundary);
    const double hull_area = std::abs(polygon_area(hull));
    if (hull_area <= 0.0) continue;
    auto q = quad_from_hull(hull);
    if (!q || !is_convex(*q)) continue;
    const double quad_area = std::abs(signed_area(*q));
    if (quad_area < params.min_fill * hull_area) continue;
    const auto expanded = offset_quad(*q, params.edge_offset);
    const double area = std::abs(signed_area(expanded));
    if (area < params.min_area || area > params.max_area) continue;
    quads.push_back({expanded, area});
  }
  std::sort(quads.begin(), quads.end(), [](const Quad& a, const Quad& b) {
    const Vec2 ca = 0.25 * (a.corners[0] + a.corners[1] + a.corners[2] + a.corners[3]);
    const Vec2 cb = 0.25 * (b.corners[0] + b.corners[1] + b.corners[2] + b.corners[3]);
    return ca.y() < cb.y() || (ca.y() == cb.y() && ca.x() < cb.x());
  });
  return quads;
}

DecodeResult decode_marker(const Image& img, const std::array<Vec2, 4>& quad, std::span<const MarkerCode> dictionary,
                           const DecodeParams& params) {
  // Order by angle around the centroid, then force the mirrored winding of a
  // front view so that list position k matches board corner (k + shift) % 4.
  const Vec2 centroid = 0.25 * (quad[0] + quad[1] + quad[2] + quad[3]);
  std::array<Vec2, 4> ordered = quad;
  std::sort(ordered.begin(), ordered.end(), [&](const Vec2& a, const Vec2& b) {
    return std::atan2(a.y() - centroid.y(), a.x() - centroid.x()) <
           std::atan2(b.y() - centroid.y(), b.x() - centroid.x());
  });
  if (signed_area(ordered) > 0.0) std::reverse(ordered.begin(), ordered.end());

  const int n = kMarkerCells;
  const int spc = std::max(1, params.samples_per_cell);
  const std::array<Vec2, 4> canonical{Vec2(0, 0), Vec2(n, 0), Vec2(n, n), Vec2(0, n)};
  const Mat3 h = homography4(canonical, ordered);

  // Cell means and subsamples with list order as-is (shift 0).
  std::array<std::array<double, kMarkerCells>, kMarkerCells> mean{};
  std::vector<double> samples(static_cast<std::size_t>(n * n * spc * spc));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int i = 0; i < spc; ++i) {
        for (int j = 0; j < spc; ++j) {
          const double a = c + 0.2 + 0.6 * (j + 0.5) / spc;
          const double b = r + 0.2 + 0.6 * (i + 0.5) / spc;
          const Vec2 p = apply_h(h, Vec2(a, b));
          const double val = sample_bilinear(img, p.x(), p.y());
          samples[static_cast<std::size_t>(((r * n + c) * spc + i) * spc + j)] = val;
          acc += val;
        }
      }
      mean[r][c] = acc / (spc * spc);
    }
  }
  double lo = 1e300;
  double hi = -1e300;
  for (const auto& row : mean) {
    for (double m : row) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  DecodeResult result;
  if (hi - lo < params.min_contrast) {
    result.status = DecodeStatus::RejectBorder;
    return result;
  }
  const double threshold = 0.5 * (lo + hi);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const bool border = r == 0 || c == 0 || r == n - 1 || c == n - 1;
      if (border && mean[r][c] >= threshold) {
        result.status = DecodeStatus::RejectBorder;
        return result;
      }
    }
  }
  int unambiguous = 0;
  for (int cell = 0; cell < n * n; ++cell) {
    const bool white = mean[cell / n][cell % n] >= threshold;
    bool agree = true;
    for (int k = 0; k < spc * spc; ++k) {
      if ((samples[static_cast<std::size_t>(cell * spc * spc + k)] >= threshold) != white) agree = false;
    }
    unambiguous += agree ? 1 : 0;
  }

  // Payload read under each of the four cyclic shifts of the corner list.
  int best_id = -1;
  int best_shift = 0;
  int best_dist = params.hamming_tolerance + 1;
  bool tie = false;
  for (int shift = 0; shift < 4; ++shift) {
    MarkerCode code = 0;
    for (int r = 0; r < kMarkerPayload; ++r) {
      for (int c = 0; c < kMarkerPayload; ++c) {
        // Board cell (r, c) under shift s lives at the grid cell obtained by
        // rotating (r, c) s quarter turns in the sampled grid.
        int rr = r + 1;
        int cc = c + 1;
        for (int k = 0; k < shift; ++k) {
          const int nr = cc;
          const int nc = n - 1 - rr;
          rr = nr;
          cc = nc;
        }
        if (mean[rr][cc] >= threshold) code |= static_cast<MarkerCode>(1u << (r * kMarkerPayload + c));
      }
    }
    for (std::size_t id = 0; id < dictionary.size(); ++id) {
      const int d = hamming(code, dictionary[id]);
      if (d < best_dist) {
        best_dist = d;
        best_id = static_cast<int>(id);
        best_shift = shift;
        tie = false;
      } else if (d == best_dist && static_cast<int>(id) != best_id) {
        tie = true;
      }
    }
  }
  if (best_id < 0 || tie) {
    result.status = DecodeStatus::RejectNoMatch;
    return result;
  }
  Detection det;
  det.marker_id = best_id;
  for (int k = 0; k < 4; ++k) det.corners_px[k] = ordered[(k + best_shift) % 4];
  det.decode_confidence = static_cast<double>(unambiguous) / (n * n);
  result.status = DecodeStatus::Ok;
  result.detection = det;
  return result;
}

std::vector<RefinedCorner> refine_corners_subpixel(const Image& img, std::span<const Vec2> corners, int half_window,
                                                   int max_iterations, double epsilon) {
  std::vector<RefinedCorner> out;
  out.reserve(corners.size());
  const double sigma = std::max(1.0, 0.5 * half_window);
  for (const Vec2& start : corners) {
    RefinedCorner rc{start, false};
    Vec2 c = start;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
      Vec2 b = Vec2::Zero();
      for (int j = -half_window; j <= half_window; ++j) {
        for (int i = -half_window; i <= half_window; ++i) {
          const Vec2 q = c + Vec2(i, j);
          const double gx = 0.5 * (sample_bilinear(img, q.x() + 1.0, q.y()) - sample_bilinear(img, q.x() - 1.0, q.y()));
          const double gy = 0.5 * (sample_bilinear(img, q.x(), q.y() + 1.0) - sample_bilinear(img, q.x(), q.y() - 1.0));
          const double wgt = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
          const Vec2 g(gx, gy);
          const Eigen::Matrix2d gg = wgt * g * g.transpose();
          a += gg;
          b += gg * q;
        }
      }
      const double det = a.determinant();
      if (!(det > 1e-12 * std::max(1.0, a.trace() * a.trace())) || a.trace() < 1e-12) break;
      const Vec2 next = a.inverse() * b;
      if ((next - start).norm() > half_window) break;
      const double step = (next - c).norm();
      c = next;
      if (step < epsilon) {
        rc.point = c;
        rc.converged = true;
        break;
      }
    }
    out.push_back(rc);
  }
  return out;
}

std::optional<std::array<Vec2, 4>> refine_quad_edges(const Image& img, const std::array<Vec2, 4>& quad,
                                                     int iterations) {
  std::array<Vec2, 4> corners = quad;
  for (int it = 0; it < iterations; ++it) {
    const Vec2 centroid = 0.25 * (corners[0] + corners[1] + corners[2] + corners[3]);
    double perimeter = 0.0;
    for (int k = 0; k < 4; ++k) perimeter += (corners[(k + 1) % 4] - corners[k]).norm();
    // Stay inside the one-cell border on the dark side.
    const double reach = std::clamp(0.45 * perimeter / 4.0 / kMarkerCells, 1.5, 4.0);
    constexpr double kStep = 0.25;
    const int half = static_cast<int>(std::round(reach / kStep));

    std::array<Vec2, 4> line_point{};
    std::array<Vec2, 4> line_dir{};
    for (int k = 0; k < 4; ++k) {
      const Vec2 a = corners[k];
      const Vec2 b = corners[(k + 1) % 4];
      const double len = (b - a).norm();
      if (len < 4.0) return std::nullopt;
      const Vec2 t = (b - a) / len;
      Vec2 n(-t.y(), t.x());
      if ((0.5 * (a + b) - centroid).dot(n) < 0.0) n = -n;

      std::vector<Vec2> edge;
      std::vector<double> profile(static_cast<std::size_t>(2 * half + 1));
      for (double s = 0.2 * len; s <= 0.8 * len; s += 0.5) {
        const Vec2 q = a + s * t;
        for (int i = -half; i <= half; ++i) {
          const Vec2 p = q + (i * kStep) * n;
          profile[static_cast<std::size_t>(i + half)] = sample_bilinear(img, p.x(), p.y());
        }
        double inside = 0.0;
        double outside = 0.0;
        int count = 0;
        for (int i = half / 2; i <= half; ++i) {
          inside += profile[static_cast<std::size_t>(half - i)];
          outside += profile[static_cast<std::size_t>(half + i)];
          ++count;
        }
        inside /= count;
        outside /= count;
        if (outside - inside < 0.05) continue;
        const double level = 0.5 * (inside + outside);
        double best = 1e300;
        double offset = 0.0;
        for (int i = 0; i < 2 * half; ++i) {
          const double f0 = profile[static_cast<std::size_t>(i)] - level;
          const double f1 = profile[static_cast<std::size_t>(i + 1)] - level;
          if (f0 <= 0.0 && f1 > 0.0) {
            const double o = ((i - half) + f0 / (f0 - f1)) * kStep;
            if (std::abs(o) < std::abs(best)) {
              best = o;
              offset = o;
            }
          }
        }
        if (best == 1e300) continue;
        // Linear half-level crossings lag or lead a box-filtered step depending
        // on where the edge cuts the pixel, which tilts lines that run close to
        // a pixel axis. The area under the normalized profile near the
        // crossing locates the step without that bias.
        const int jc = static_cast<int>(std::lround(offset / kStep)) + half;
        const int lo = jc - 5;
        const int hi = jc + 5;
        if (lo >= 0 && hi <= 2 * half) {
          double area = 0.0;
          for (int j = lo; j <= hi; ++j) {
            const double p = (profile[static_cast<std::size_t>(j)] - inside) / (outside - inside);
            area += (j == lo || j == hi) ? 0.5 * p : p;
          }
          offset = (hi - half) * kStep - area * kStep;
        }
        edge.push_back(q + offset * n);
      }
      if (edge.size() < 5) return std::nullopt;
      Vec2 mean = Vec2::Zero();
      for (const auto& p : edge) mean += p;
      mean /= static_cast<double>(edge.size());
      Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
      for (const auto& p : edge) cov += (p - mean) * (p - mean).transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
      line_point[k] = mean;
      line_dir[k] = eig.eigenvectors().col(1);
    }
    std::array<Vec2, 4> next{};
    for (int k = 0; k < 4; ++k) {
      const int prev = (k + 3) % 4;
      const auto x = intersect_lines(line_point[prev], line_dir[prev], line_point[k], line_dir[k]);
      if (!x) return std::nullopt;
      next[k] = *x;
    }
    for (int k = 0; k < 4; ++k) {
      if ((next[k] - quad[k]).norm() > 3.0) return std::nullopt;
    }
    corners = next;
  }
  return corners;
}

std::vector<Detection> detect_markers(const Image& img, std::span<const MarkerCode> dictionary,
                                      const MarkerDetectParams& params) {
  const BinaryImage bin = binarize(img, params.binarize);
  std::map<int, Detection> best;
  for (const Quad& q : find_quads(bin, params.quads)) {
    const DecodeResult res = decode_marker(img, q.corners, dictionary, params.decode);
    if (!res.detection) continue;
    Detection det = *res.detection;
    if (params.refinement == CornerRefinement::EdgeLines) {
      if (const auto refined = refine_quad_edges(img, det.corners_px)) det.corners_px = *refined;
    } else if (params.refinement == CornerRefinement::Window) {
      const int hw = params.refine_half_window;
      bool inside = true;
      for (const auto& p : det.corners_px) {
        if (p.x() < hw + 1 || p.y() < hw + 1 || p.x() > img.width() - hw - 2 || p.y() > img.height() - hw - 2) {
          inside = false;
        }
      }
      if (inside && hw > 0) {
        const auto refined = refine_corners_subpixel(img, det.corners_px, hw);
        for (int k = 0; k < 4; ++k) {
          if (refined[k].converged) det.corners_px[k] = refined[k].point;
        }
      }
    }
    auto it = best.find(det.marker_id);
    if (it == best.end() || it->second.decode_confidence < det.decode_confidence) best[det.marker_id] = det;
  }
  std::vector<Detection> out;
  for (auto& [id, det] : best) out.push_back(det);
  return out;
}

namespace {

struct LatticeQuad {
  std::array<Vec2, 4> v;  // sorted by angle around the centroid
  double side = 0.0;
  bool placed = false;
  int a = 0;
  int b = 0;
  int base = 0;  // vertex index sitting at lattice offset (0, 0)
};

constexpr std::array<std::array<int, 2>, 4> kOffsets{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};

struct Lattice {
  std::vector<CheckerCorner> corners;
  double side = 0.0;  // mean quad side, px
};

std::optional<Lattice> assemble_lattice(const Image& img, const BoardSpec& spec,
                                                           const std::vector<Quad>& quads,
                                                           const CheckerDetectParams& params) {
  std::vector<LatticeQuad> lq;
  for (const Quad& q : quads) {
    LatticeQuad l;
    const Vec2 c = 0.25 * (q.corners[0] + q.corners[1] + q.corners[2] + q.corners[3]);
    l.v = q.corners;
    std::sort(l.v.begin(), l.v.end(), [&](const Vec2& x, const Vec2& y) {
      return std::atan2(x.y() - c.y(), x.x() - c.x()) < std::atan2(y.y() - c.y(), y.x() - c.x());
    });
    for (int k = 0; k < 4; ++k) l.side += 0.25 * (l.v[(k + 1) % 4] - l.v[k]).norm();
    lq.push_back(l);
  }
  const std::size_t n = lq.size();
  if (n < 2) return std::nullopt;

  // Vertex links between diagonal neighbours: (quad, vertex) -> (quad, vertex).
  std::vector<std::array<std::pair<int, int>, 4>> link(n);
  for (auto& l : link) l.fill({-1, -1});
  for (std::size_t i = 0; i < n; ++i) {
    for (int vi = 0; vi < 4; ++vi) {
      double best = 1e300;
      std::pair<int, int> arg{-1, -1};
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        // Board squares share one size; neighbours of very different size are
        // marker cells or clutter.
        if (std::min(lq[i].side, lq[j].side) < 0.7 * std::max(lq[i].side, lq[j].side)) continue;
        const double tol = params.link_tolerance * std::min(lq[i].side, lq[j].side);
        for (int vj = 0; vj < 4; ++vj) {
          const double d = (lq[i].v[vi] - lq[j].v[vj]).norm();
          if (d < tol && d < best) {
            best = d;
            arg = {static_cast<int>(j), vj};
          }
        }
      }
      link[i][vi] = arg;
    }
  }
  // Keep only mutual links.
  for (std::size_t i = 0; i < n; ++i) {
    for (int vi = 0; vi < 4; ++vi) {
      const auto [j, vj] = link[i][vi];
      if (j < 0) continue;
      if (link[j][vj] != std::pair<int, int>{static_cast<int>(i), vi}) link[i][vi] = {-1, -1};
    }
  }

  // Place every linked component on its own lattice; keep the one covering
  // the most image area.
  std::size_t seed = 0;
  std::vector<std::size_t> members;
  double members_area = 0.0;
  for (std::size_t start = 0; start < n; ++start) {
    if (lq[start].placed) continue;
    lq[start].placed = true;
    std::deque<std::size_t> queue{start};
    std::vector<std::size_t> comp;
    double area = 0.0;
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      comp.push_back(i);
      area += lq[i].side * lq[i].side;
      for (int k = 0; k < 4; ++k) {
        const int vi = (lq[i].base + k) % 4;
        const auto [j, vj] = link[i][vi];
        if (j < 0 || lq[j].placed) continue;
        // The shared point is offset k of quad i and offset (k + 2) % 4 of quad j.
        const int kj = (k + 2) % 4;
        lq[j].a = lq[i].a + kOffsets[k][0] - kOffsets[kj][0];
        lq[j].b = lq[i].b + kOffsets[k][1] - kOffsets[kj][1];
        lq[j].base = ((vj - kj) % 4 + 4) % 4;
        lq[j].placed = true;
        queue.push_back(static_cast<std::size_t>(j));
      }
    }
    if (comp.size() >= 2 && area > members_area) {
      members_area = area;
      members = std::move(comp);
      seed = start;
    }
  }
  if (members.empty()) return std::nullopt;

  // Seed lattice axes in the image: offset (1,0) and (0,1) directions.
  const auto& s = lq[seed];
  const Vec2 ea = s.v[(s.base + 1) % 4] - s.v[s.base];
  const Vec2 eb = s.v[(s.base + 3) % 4] - s.v[s.base];
  const double det_m = cross2(ea, eb);

  // Doubled coordinates: square centers are odd, lattice points even.
  struct Candidate {
    Eigen::Matrix2i d;
    Eigen::Vector2i t;
  };
  std::vector<Candidate> candidates;
  const std::array<Eigen::Matrix2i, 8> dihedral = [] {
    std::array<Eigen::Matrix2i, 8> m{};
    int idx = 0;
    for (int swap = 0; swap < 2; ++swap) {
      for (int sx : {1, -1}) {
        for (int sy : {1, -1}) {
          Eigen::Matrix2i d;
          if (swap == 0) {
            d << sx, 0, 0, sy;
          } else {
            d << 0, sx, sy, 0;
          }
          m[idx++] = d;
        }
      }
    }
    return m;
  }();
  for (const auto& d : dihedral) {
    // Front views are mirrored: board axes wind opposite to pixel axes.
    if (det_m * d.determinant() >= 0.0) continue;
    int min_x = 1 << 30, max_x = -(1 << 30), min_y = 1 << 30, max_y = -(1 << 30);
    std::vector<Eigen::Vector2i> centers;
    for (std::size_t i : members) {
      const Eigen::Vector2i c = d * Eigen::Vector2i(2 * lq[i].a + 1, 2 * lq[i].b + 1);
      centers.push_back(c);
      min_x = std::min(min_x, c.x());
      max_x = std::max(max_x, c.x());
      min_y = std::min(min_y, c.y());
      max_y = std::max(max_y, c.y());
    }
    for (int tx = 1 - min_x; tx + max_x <= 2 * spec.cols - 1; ++tx) {
      if (tx % 2 != 0) continue;
      for (int ty = 1 - min_y; ty + max_y <= 2 * spec.rows - 1; ++ty) {
        if (ty % 2 != 0) continue;
        bool parity_ok = true;
        for (const auto& c : centers) {
          const int col = (c.x() + tx - 1) / 2;
          const int row = (c.y() + ty - 1) / 2;
          if (is_white_square(col, row)) {
            parity_ok = false;
            break;
          }
        }
        if (parity_ok) candidates.push_back({d, Eigen::Vector2i(tx, ty)});
      }
    }
  }
  if (candidates.size() != 1) return std::nullopt;
  const auto& cand = candidates.front();

  const int ni = spec.cols - 1;
  std::map<int, std::pair<Vec2, int>> acc;
  double side_sum = 0.0;
  for (std::size_t i : members) {
    side_sum += lq[i].side;
    for (int k = 0; k < 4; ++k) {
      const Eigen::Vector2i p2(2 * (lq[i].a + kOffsets[k][0]), 2 * (lq[i].b + kOffsets[k][1]));
      const Eigen::Vector2i g = (cand.d * p2 + cand.t) / 2;
      if (g.x() < 1 || g.y() < 1 || g.x() > spec.cols - 1 || g.y() > spec.rows - 1) continue;
      const int index = (g.y() - 1) * ni + (g.x() - 1);
      auto& slot = acc.try_emplace(index, Vec2::Zero(), 0).first->second;
      slot.first += lq[i].v[(lq[i].base + k) % 4];
      slot.second += 1;
    }
  }
  const double side = side_sum / static_cast<double>(members.size());
  const int half_window = std::clamp(static_cast<int>(std::lround(0.3 * side)), 3, 15);

  std::vector<CheckerCorner> out;
  std::vector<Vec2> initial;
  std::vector<int> indices;
  for (const auto& [index, slot] : acc) {
    indices.push_back(index);
    initial.push_back(slot.first / slot.second);
  }
  const auto refined = refine_corners_subpixel(img, initial, half_window);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.push_back({indices[i], refined[i].converged ? refined[i].point : initial[i]});
  }
  return Lattice{std::move(out), side};
}

}  // namespace

std::vector<CheckerCorner> detect_checker_corners(const Image& img, const BoardSpec& spec,
                                                  const CheckerDetectParams& params) {
  const BinaryImage bin = binarize(img, params.binarize);
  const int needed = static_cast<int>(std::ceil(params.min_found_fraction * spec.interior_corner_count()));
  BinaryImage work = bin;
  // Too few erosions leave diagonal squares bridged, and the dark pieces
  // inside markers can then form a plausible lattice of their own. Try every
  // level and prefer the lattice of the largest squares.
  Lattice best;
  for (int erosions = 1; erosions <= 3; ++erosions) {
    work = erode(work);
    QuadParams qp;
    qp.min_area = params.min_square_area;
    qp.four_connected = true;
    qp.min_fill = 0.85;
    qp.edge_offset = 0.5 + erosions;
    const auto quads = find_quads(work, qp);
    if (auto found = assemble_lattice(img, spec, quads, params)) {
      const bool enough = static_cast<int>(found->corners.size()) >= needed;
      const bool best_enough = static_cast<int>(best.corners.size()) >= needed;
      const bool better = enough == best_enough ? (enough ? found->side > best.side
                                                          : found->corners.size() > best.corners.size())
                                                : enough;
      if (better) best = std::move(*found);
    }
  }
  std::vector<CheckerCorner> corners = std::move(best.corners);
  if (static_cast<int>(corners.size()) < needed) {
    throw Error(ErrorCode::BoardNotFound, "found " + std::to_string(corners.size()) + " checker corners");
  }
  return corners;
}

}  // namespace octcal
