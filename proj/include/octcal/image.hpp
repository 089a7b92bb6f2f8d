#pragma once

#include <cstdint>
#include <vector>

#include "octcal/geom.hpp"

namespace octcal {

/// Row-major single-channel image. Pixel (u, v) has its center at the
/// continuous coordinate (u, v); u runs along a row, v down the rows.
template <typename T>
class Grid2 {
 public:
  Grid2() = default;
  Grid2(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width_ && v < height_; }

  T& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const T& at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Grid2&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image = Grid2<float>;
using BinaryImage = Grid2<std::uint8_t>;

/// Bilinear sample with edge clamping.
double sample_bilinear(const Image& img, double u, double v);

/// Pixel-exact rotation by 90 degrees counter-clockwise as displayed
/// (v down): pixel (u, v) moves to (v, W - 1 - u).
Image rotate90(const Image& img);

}  // namespace octcal
