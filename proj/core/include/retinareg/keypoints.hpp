#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "retinareg/features.hpp"
#include "retinareg/geometry.hpp"

namespace retinareg {

/// Row-major 2-D grid of reals.
struct Grid2D {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  double& operator()(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int x, int y) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

/// Full-resolution keypoint confidence (vessel minus background logit).
using ConfidenceHeatmap = Grid2D;

struct Keypoint {
  Point2 pos;
  double confidence = 0.0;
};

/// N x D descriptors, one per keypoint, rows L2-normalized or zero.
class DescriptorSet {
 public:
  DescriptorSet() = default;
  DescriptorSet(std::size_t count, int dim) : dim_(dim), data_(count * dim, 0.0f) {}

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  int dim() const { return dim_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)}; }
  const std::vector<float>& data() const { return data_; }

 private:
  int dim_ = 0;
  std::vector<float> data_;
};

/// Catmull-Rom (a = -0.5) upsampling with half-pixel-centre alignment and
/// edge replication, cropped to out_w x out_h.
Grid2D upsample_bicubic(const Grid2D& grid, int factor, int out_w, int out_h);

ConfidenceHeatmap confidence_heatmap(const DenseFeatureMap& fm);

/// Greedy non-maximum suppression: pixels visited by descending confidence
/// (row-major index breaks ties); a pixel survives iff no survivor lies within
/// Euclidean distance <= radius. Only pixels above `min_confidence` are
/// visited and at most `limit` survivors are returned.
std::vector<Keypoint> nms(const ConfidenceHeatmap& h, double radius = 4.0,
                          double min_confidence = -std::numeric_limits<double>::infinity(),
                          std::size_t limit = std::numeric_limits<std::size_t>::max());

std::vector<Keypoint> extract_keypoints(const ConfidenceHeatmap& h, std::size_t n_max = 4000,
                                        double min_confidence = 0.0, double radius = 4.0);

/// Bilinear interpolation of the descriptor grid at each keypoint, then L2
/// normalization. Throws OutOfBounds for keypoints outside the source image.
DescriptorSet sample_descriptors(const DenseFeatureMap& fm, std::span<const Keypoint> kps);

}  // namespace retinareg
