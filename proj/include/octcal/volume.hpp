#pragma once

#include <vector>

#include "octcal/geom.hpp"
#include "octcal/image.hpp"

namespace octcal {

/// Voxel counts along depth (z) and the two lateral axes (x, y).
struct VolumeDims {
  int z = 128;
  int x = 128;
  int y = 128;
  bool operator==(const VolumeDims&) const = default;
};

/// Millimeters per voxel along each axis.
struct VoxelSpacing {
  double dz = 2.66 / 128.0;
  double dx = 10.0 / 128.0;
  double dy = 10.0 / 128.0;
  bool operator==(const VoxelSpacing&) const = default;
  double diagonal() const;
};

/// OCT intensity volume in [0, 1]. Voxel (z, x, y) sits at
/// (x * dx, y * dy, z * dz) in the probe frame O; z is depth away from the probe.
/// Storage order is (z, x, y) with y fastest.
class OctVolume {
 public:
  OctVolume() = default;
  OctVolume(VolumeDims dims, VoxelSpacing spacing, float fill = 0.0f);

  const VolumeDims& dims() const { return dims_; }
  const VoxelSpacing& spacing() const { return spacing_; }
  Vec3 fov() const { return {dims_.x * spacing_.dx, dims_.y * spacing_.dy, dims_.z * spacing_.dz}; }

  float& at(int z, int x, int y) { return data_[index(z, x, y)]; }
  float at(int z, int x, int y) const { return data_[index(z, x, y)]; }
  std::size_t index(int z, int x, int y) const {
    return (static_cast<std::size_t>(z) * dims_.x + x) * dims_.y + y;
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  /// Robot pose (gripper -> robot world) reported when the volume was acquired.
  const RigidTransform& acquisition_pose() const { return acquisition_pose_; }
  void set_acquisition_pose(const RigidTransform& pose) { acquisition_pose_ = pose; }

  Vec3 voxel_position(double z, double x, double y) const {
    return {x * spacing_.dx, y * spacing_.dy, z * spacing_.dz};
  }

 private:
  VolumeDims dims_{0, 0, 0};
  VoxelSpacing spacing_;
  std::vector<float> data_;
  RigidTransform acquisition_pose_;
};

/// Throws InvalidInput unless every dim and spacing is positive.
void validate_geometry(const VolumeDims& dims, const VoxelSpacing& spacing);

struct EnfaceResult {
  Image image;              // width = X (u = x index), height = Y (v = y index)
  Grid2<int> depth_index;   // argmax depth, same layout as image
};

struct SurfacePoints {
  std::vector<Vec3> points_o;      // probe frame, mm
  std::vector<float> intensity;
  Grid2<std::uint8_t> mask;        // 1 where a point was emitted, indexed (x, y)
};

/// 3x3x3 median with replicate padding. Throws VolumeTooSmall when any dim < 3.
OctVolume median_filter_3(const OctVolume& v, int threads = 0);

/// Per lateral cell the maximum over depth; ties go to the smallest depth.
EnfaceResult enface_max_projection(const OctVolume& v);

/// One point per lateral cell whose maximum reaches `min_intensity`.
SurfacePoints extract_surface(const OctVolume& v, double min_intensity);

/// Subpixel en-face points (u, v) -> probe frame, depth bilinearly
/// interpolated from the argmax map. Throws OutOfBounds.
std::vector<Vec3> lift_pixels_to_3d(const EnfaceResult& e, std::span<const Vec2> pixels, const VoxelSpacing& spacing);

}  // namespace octcal
