#include "octcal/volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "octcal/error.hpp"
#include "octcal/parallel.hpp"

namespace octcal {

double VoxelSpacing::diagonal() const { return std::sqrt(dx * dx + dy * dy + dz * dz); }

void validate_geometry(const VolumeDims& dims, const VoxelSpacing& spacing) {
  if (dims.z <= 0 || dims.x <= 0 || dims.y <= 0) {
    throw Error(ErrorCode::InvalidInput, "volume dims must be positive");
  }
  if (!(spacing.dz > 0.0) || !(spacing.dx > 0.0) || !(spacing.dy > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "voxel spacing must be strictly positive");
  }
}

OctVolume::OctVolume(VolumeDims dims, VoxelSpacing spacing, float fill) : dims_(dims), spacing_(spacing) {
  validate_geometry(dims, spacing);
  data_.assign(static_cast<std::size_t>(dims.z) * dims.x * dims.y, fill);
}

namespace {

// Sorting network for nine values (25 compare-exchanges).
inline void sort9(std::array<float, 9>& v) {
  auto cx = [&](int i, int j) {
    if (v[j] < v[i]) std::swap(v[i], v[j]);
  };
  cx(0, 1); cx(3, 4); cx(6, 7); cx(1, 2); cx(4, 5); cx(7, 8); cx(0, 1); cx(3, 4); cx(6, 7);
  cx(0, 3); cx(3, 6); cx(0, 3); cx(1, 4); cx(4, 7); cx(1, 4); cx(2, 5); cx(5, 8); cx(2, 5);
  cx(1, 3); cx(5, 7); cx(2, 6); cx(4, 6); cx(2, 4); cx(2, 3); cx(5, 6);
}

}  // namespace

OctVolume median_filter_3(const OctVolume& v, int threads) {
  const auto& d = v.dims();
  if (d.z < 3 || d.x < 3 || d.y < 3) {
    throw Error(ErrorCode::VolumeTooSmall, "median filter needs at least 3 voxels per axis");
  }
  OctVolume out(d, v.spacing());
  out.set_acquisition_pose(v.acquisition_pose());
  const float* src = v.data().data();
  float* dst = out.data().data();

  // Along each y row the window is three 3x3 slices at y-1, y, y+1. Each
  // slice is sorted once and reused by three windows; the median is then the
  // 14th element of a three-way merge.
  parallel_for(static_cast<std::size_t>(d.z), threads, [&](std::size_t zi) {
    const int z = static_cast<int>(zi);
    const std::array<int, 3> zs{std::max(z - 1, 0), z, std::min(z + 1, d.z - 1)};
    std::vector<std::array<float, 9>> slices(static_cast<std::size_t>(d.y));
    for (int x = 0; x < d.x; ++x) {
      const std::array<int, 3> xs{std::max(x - 1, 0), x, std::min(x + 1, d.x - 1)};
      std::array<const float*, 9> rows{};
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) rows[a * 3 + b] = src + v.index(zs[a], xs[b], 0);
      }
      for (int y = 0; y < d.y; ++y) {
        auto& s = slices[static_cast<std::size_t>(y)];
        for (int r = 0; r < 9; ++r) s[r] = rows[r][y];
        sort9(s);
      }
      for (int y = 0; y < d.y; ++y) {
        const auto& a = slices[static_cast<std::size_t>(std::max(y - 1, 0))];
        const auto& b = slices[static_cast<std::size_t>(y)];
        const auto& c = slices[static_cast<std::size_t>(std::min(y + 1, d.y - 1))];
        int i = 0, j = 0, k = 0;
        float m = 0.0f;
        for (int n = 0; n < 14; ++n) {
          const float va = i < 9 ? a[i] : std::numeric_limits<float>::infinity();
          const float vb = j < 9 ? b[j] : std::numeric_limits<float>::infinity();
          const float vc = k < 9 ? c[k] : std::numeric_limits<float>::infinity();
          if (va <= vb && va <= vc) {
            m = va;
            ++i;
          } else if (vb <= vc) {
            m = vb;
            ++j;
          } else {
            m = vc;
            ++k;
          }
        }
        dst[out.index(z, x, y)] = m;
      }
    }
  });
  return out;
}

EnfaceResult enface_max_projection(const OctVolume& v) {
  const auto& d = v.dims();
  EnfaceResult e{Image(d.x, d.y, 0.0f), Grid2<int>(d.x, d.y, 0)};
  for (int x = 0; x < d.x; ++x) {
    for (int y = 0; y < d.y; ++y) {
      float best = v.at(0, x, y);
      int arg = 0;
      for (int z = 1; z < d.z; ++z) {
        const float val = v.at(z, x, y);
        if (val > best) {
          best = val;
          arg = z;
        }
      }
      e.image.at(x, y) = best;
      e.depth_index.at(x, y) = arg;
    }
  }
  return e;
}

SurfacePoints extract_surface(const OctVolume& v, double min_intensity) {
  const EnfaceResult e = enface_max_projection(v);
  const auto& d = v.dims();
  SurfacePoints s;
  s.mask = Grid2<std::uint8_t>(d.x, d.y, 0);
  for (int x = 0; x < d.x; ++x) {
    for (int y = 0; y < d.y; ++y) {
      const float peak = e.image.at(x, y);
      if (peak < min_intensity) continue;
      s.points_o.push_back(v.voxel_position(e.depth_index.at(x, y), x, y));
      s.intensity.push_back(peak);
      s.mask.at(x, y) = 1;
    }
  }
  return s;
}

std::vector<Vec3> lift_pixels_to_3d(const EnfaceResult& e, std::span<const Vec2> pixels, const VoxelSpacing& spacing) {
  const int w = e.depth_index.width();
  const int h = e.depth_index.height();
  std::vector<Vec3> out;
  out.reserve(pixels.size());
  for (const Vec2& p : pixels) {
    if (!(p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= w - 1 && p.y() <= h - 1)) {
      throw Error(ErrorCode::OutOfBounds, "pixel outside the en-face image");
    }
    const int u0 = std::min(static_cast<int>(p.x()), w - 1);
    const int v0 = std::min(static_cast<int>(p.y()), h - 1);
    const int u1 = std::min(u0 + 1, w - 1);
    const int v1 = std::min(v0 + 1, h - 1);
    const double fu = p.x() - u0;
    const double fv = p.y() - v0;
    const auto& di = e.depth_index;
    const double depth = (1.0 - fv) * ((1.0 - fu) * di.at(u0, v0) + fu * di.at(u1, v0)) +
                         fv * ((1.0 - fu) * di.at(u0, v1) + fu * di.at(u1, v1));
    out.emplace_back(p.x() * spacing.dx, p.y() * spacing.dy, depth * spacing.dz);
  }
  return out;
}

}  // namespace octcal
