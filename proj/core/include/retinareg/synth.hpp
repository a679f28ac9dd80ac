#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "retinareg/geometry.hpp"
#include "retinareg/image.hpp"

namespace retinareg {

/// Appearance applied to one rendered side of a synthetic pair.
struct SideStyle {
  Modality modality = Modality::kSynthA;
  bool invert = false;
  double gamma = 1.0;
  double blur_sigma = 0.0;
  double noise_sigma = 0.0;
  double gradient_amplitude = 0.0;
  /// Seeds the noise field and gradient direction; derived from the pair
  /// seed and the side when unset.
  std::optional<std::uint64_t> noise_seed;
};

struct SynthConfig {
  int width = 320;
  int height = 320;
  int roots = 3;
  int branch_depth = 4;
  double segment_length_min = 50.0;
  double segment_length_max = 100.0;
  double vessel_width_min = 1.5;
  double vessel_width_max = 6.0;
  double branch_angle_min_deg = 25.0;
  double branch_angle_max_deg = 50.0;
  double background = 0.75;
  double vessel_contrast = 0.5;

  SideStyle side_a{Modality::kSynthA, false, 1.0, 0.5, 0.01, 0.05, std::nullopt};
  SideStyle side_b{Modality::kSynthB, true, 0.7, 1.0, 0.02, 0.1, std::nullopt};

  double max_rotation_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double max_translation = 40.0;
  double max_perspective = 5e-5;
  /// Keypoints closer than this to an image border are not emitted.
  double border_margin = 16.0;

  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthPair {
  ImageBuffer image_a;
  ImageBuffer image_b;
  Homography h_gt;                   // A -> B
  CorrespondenceSet keypoints;       // bifurcations visible in both images
  CorrespondenceSet control_points;  // 6 well-spread bifurcations
};

/// Renders a random vessel tree into A and, through the inverse of a random
/// homography, into B, then applies each side's style. Throws ConfigError.
SynthPair synth_generate(const SynthConfig& cfg);

/// Draws the pair homography used by synth_generate for `cfg`.
Homography synth_homography(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace retinareg
