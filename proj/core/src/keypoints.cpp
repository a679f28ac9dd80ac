#include "retinareg/keypoints.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "retinareg/error.hpp"

namespace retinareg {
namespace {

struct Taps {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

double catmull_rom(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

std::vector<Taps> bicubic_taps(int out_size, int factor, int grid_size) {
  std::vector<Taps> taps(out_size);
  for (int o = 0; o < out_size; ++o) {
    const double u = (o + 0.5) / factor - 0.5;
    const int base = static_cast<int>(std::floor(u));
    const double t = u - base;
    for (int k = 0; k < 4; ++k) {
      taps[o].index[k] = std::clamp(base - 1 + k, 0, grid_size - 1);
      taps[o].weight[k] = catmull_rom(t - (k - 1));
    }
  }
  return taps;
}

}  // namespace

Grid2D upsample_bicubic(const Grid2D& grid, int factor, int out_w, int out_h) {
  if (factor < 1) throw Error(ErrorCode::kBadFactor, "upsampling factor must be >= 1");
  if (grid.width <= 0 || grid.height <= 0 ||
      grid.values.size() != static_cast<std::size_t>(grid.width) * grid.height) {
    throw Error(ErrorCode::kDimensionMismatch, "malformed grid");
  }
  const auto covers = [factor](int g, int out) {
    return out >= 1 && static_cast<long>(g) * factor >= out &&
           static_cast<long>(g - 1) * factor < out;
  };
  if (!covers(grid.width, out_w) || !covers(grid.height, out_h)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "output size must equal the upsampled grid cropped by less than one cell");
  }
  // Taps are accumulated as offsets from the nearest-left sample; the weights
  // sum to exactly one, so constant grids come back bit-exact.
  const auto tx = bicubic_taps(out_w, factor, grid.width);
  const auto ty = bicubic_taps(out_h, factor, grid.height);

  Grid2D horizontal(out_w, grid.height);
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double ref = grid(tx[x].index[1], y);
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * (grid(tx[x].index[k], y) - ref);
      horizontal(x, y) = ref + acc;
    }
  }
  Grid2D out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double ref = horizontal(x, ty[y].index[1]);
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += ty[y].weight[k] * (horizontal(x, ty[y].index[k]) - ref);
      out(x, y) = ref + acc;
    }
  }
  return out;
}

ConfidenceHeatmap confidence_heatmap(const DenseFeatureMap& fm) {
  Grid2D diff(fm.grid_w, fm.grid_h);
  for (int gy = 0; gy < fm.grid_h; ++gy)
    for (int gx = 0; gx < fm.grid_w; ++gx)
      diff(gx, gy) = static_cast<double>(fm.vessel_logit(gx, gy)) -
                     static_cast<double>(fm.background_logit(gx, gy));
  return upsample_bicubic(diff, fm.stride, fm.source_w, fm.source_h);
}

std::vector<Keypoint> nms(const ConfidenceHeatmap& h, double radius, double min_confidence,
                          std::size_t limit) {
  if (!(radius >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "NMS radius must be >= 1");
  std::vector<std::size_t> order;
  order.reserve(h.values.size());
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (h.values[i] > min_confidence) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (h.values[a] != h.values[b]) return h.values[a] > h.values[b];
    return a < b;
  });

  // Offsets of the closed disc; a survivor suppresses every pixel inside it.
  const int r = static_cast<int>(std::floor(radius));
  std::vector<std::pair<int, int>> disc;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= radius * radius) disc.emplace_back(dx, dy);

  std::vector<unsigned char> suppressed(h.values.size(), 0);
  std::vector<Keypoint> out;
  for (std::size_t idx : order) {
    if (out.size() >= limit) break;
    if (suppressed[idx]) continue;
    const int x = static_cast<int>(idx % h.width);
    const int y = static_cast<int>(idx / h.width);
    out.push_back({{static_cast<double>(x), static_cast<double>(y)}, h.values[idx]});
    for (const auto& [dx, dy] : disc) {
      const int nx = x + dx, ny = y + dy;
      if (nx < 0 || ny < 0 || nx >= h.width || ny >= h.height) continue;
      suppressed[static_cast<std::size_t>(ny) * h.width + nx] = 1;
    }
  }
  return out;
}

std::vector<Keypoint> extract_keypoints(const ConfidenceHeatmap& h, std::size_t n_max,
                                        double min_confidence, double radius) {
  if (n_max < 1) throw Error(ErrorCode::kInvalidArgument, "n_max must be >= 1");
  // Greedy order is confidence-descending and sub-threshold pixels can only
  // suppress pixels that are themselves sub-threshold, so thresholding and
  // capping inside the sweep equals filtering the full NMS output.
  return nms(h, radius, min_confidence, n_max);
}

DescriptorSet sample_descriptors(const DenseFeatureMap& fm, std::span<const Keypoint> kps) {
  DescriptorSet out(kps.size(), fm.descriptor_dim);
  std::vector<double> acc(static_cast<std::size_t>(fm.descriptor_dim));
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const Point2 p = kps[i].pos;
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < fm.source_w && p.y < fm.source_h)) {
      throw Error(ErrorCode::kOutOfBounds, "keypoint outside the source image");
    }
    const double u = std::clamp((p.x + 0.5) / fm.stride - 0.5, 0.0, fm.grid_w - 1.0);
    const double v = std::clamp((p.y + 0.5) / fm.stride - 0.5, 0.0, fm.grid_h - 1.0);
    const int x0 = static_cast<int>(std::floor(u)), y0 = static_cast<int>(std::floor(v));
    const int x1 = std::min(x0 + 1, fm.grid_w - 1), y1 = std::min(y0 + 1, fm.grid_h - 1);
    const double fx = u - x0, fy = v - y0;
    const std::array<std::pair<std::array<int, 2>, double>, 4> corners{{
        {{x0, y0}, (1 - fx) * (1 - fy)},
        {{x1, y0}, fx * (1 - fy)},
        {{x0, y1}, (1 - fx) * fy},
        {{x1, y1}, fx * fy},
    }};
    std::fill(acc.begin(), acc.end(), 0.0);
    for (const auto& [cell, w] : corners) {
      if (w == 0.0) continue;
      const auto d = fm.descriptor(cell[0], cell[1]);
      for (int k = 0; k < fm.descriptor_dim; ++k) acc[k] += w * d[k];
    }
    double norm = 0.0;
    for (double a : acc) norm += a * a;
    norm = std::sqrt(norm);
    auto row = out.row(i);
    if (norm <= 1e-12) continue;
    for (int k = 0; k < fm.descriptor_dim; ++k) row[k] = static_cast<float>(acc[k] / norm);
  }
  return out;
}

}  // namespace retinareg
