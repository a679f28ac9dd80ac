#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace retinareg::detail {

/// Single-channel float plane with edge-replicated reads.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> v;

  Plane() = default;
  Plane(int w, int h, float fill = 0.0f)
      : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {}

  float& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  float operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  float clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }
};

std::vector<float> gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication. sigma <= 0 returns a copy.
Plane gaussian_blur(const Plane& in, double sigma);

/// Value at the given quantile (0..1) of the plane, by nth_element.
float quantile(const Plane& p, double q);

}  // namespace retinareg::detail
