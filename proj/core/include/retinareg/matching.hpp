#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "retinareg/features.hpp"
#include "retinareg/geometry.hpp"
#include "retinareg/keypoints.hpp"

namespace retinareg {

struct Match {
  std::size_t idx_a = 0;
  std::size_t idx_b = 0;
  double distance = 0.0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Euclidean distance between two descriptor rows, accumulated in a fixed
/// order so that descriptor_distance(a, b) == descriptor_distance(b, a).
double descriptor_distance(std::span<const float> a, std::span<const float> b);

/// Brute-force mutual nearest neighbours, ties to the smallest index, sorted
/// by (distance, idx_a, idx_b). Throws DimensionMismatch.
std::vector<Match> mutual_nn_match(const DescriptorSet& a, const DescriptorSet& b);

struct RansacConfig {
  double reproj_threshold = 5.0;
  std::size_t max_iterations = 5000;
  double confidence = 0.9999;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RansacResult {
  Homography homography;
  std::vector<bool> inlier_mask;
  std::size_t iterations = 0;

  std::size_t inlier_count() const;
};

/// Number of RANSAC iterations after which an all-inlier sample has been drawn
/// with the requested confidence.
double ransac_required_iterations(double inlier_ratio, double confidence,
                                  std::size_t sample_size = 4);

/// 4-point RANSAC with one-directional transfer error, adaptive stopping and
/// a normalized-DLT refit on the best consensus set. Throws
/// InsufficientMatches (< 4 pairs) and NoModel.
RansacResult ransac_homography(std::span<const Correspondence> pairs, const RansacConfig& cfg);

struct RegistrationConfig {
  std::size_t n_max = 4000;
  double nms_radius = 4.0;
  double min_confidence = 0.0;
  RansacConfig ransac;
};

enum class RegistrationStatus { kOk, kTooFewMatches, kRansacFailed };

std::string_view to_string(RegistrationStatus s);

struct RegistrationResult {
  RegistrationStatus status = RegistrationStatus::kTooFewMatches;
  std::optional<Homography> homography;  // present iff status == kOk
  std::vector<Match> matches;
  std::vector<bool> inlier_mask;  // parallel to matches
  std::vector<Keypoint> keypoints_a;
  std::vector<Keypoint> keypoints_b;
  std::uint64_t seed = 0;
  std::size_t ransac_iterations = 0;

  std::size_t inlier_count() const;
};

/// Heatmap, keypoints, descriptors, mutual-NN matching and RANSAC on a pair
/// of dense maps. Stage failures are reported through `status`.
RegistrationResult register_pair(const DenseFeatureMap& a, const DenseFeatureMap& b,
                                 const RegistrationConfig& cfg);

}  // namespace retinareg
