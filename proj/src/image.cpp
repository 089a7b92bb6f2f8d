#include "octcal/image.hpp"

#include <algorithm>
#include <cmath>

namespace octcal {

double sample_bilinear(const Image& img, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(img.width() - 1));
  v = std::clamp(v, 0.0, static_cast<double>(img.height() - 1));
  const int u0 = std::min(static_cast<int>(std::floor(u)), img.width() - 1);
  const int v0 = std::min(static_cast<int>(std::floor(v)), img.height() - 1);
  const int u1 = std::min(u0 + 1, img.width() - 1);
  const int v1 = std::min(v0 + 1, img.height() - 1);
  const double fu = u - u0;
  const double fv = v - v0;
  const double top = (1.0 - fu) * img.at(u0, v0) + fu * img.at(u1, v0);
  const double bottom = (1.0 - fu) * img.at(u0, v1) + fu * img.at(u1, v1);
  return (1.0 - fv) * top + fv * bottom;
}

Image rotate90(const Image& img) {
  const int w = img.width();
  const int h = img.height();
  Image out(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) out.at(v, w - 1 - u) = img.at(u, v);
  }
  return out;
}

}  // namespace octcal
