#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retinareg/image.hpp"

namespace retinareg {

/// Dense detector/descriptor output of a backend at a fixed stride.
///
/// Detector logits are cell-major with two channels per cell (vessel, then
/// background); descriptors are cell-major with `descriptor_dim` values per
/// cell. Grid dimensions always equal ceil(source / stride).
struct DenseFeatureMap {
  int source_w = 0;
  int source_h = 0;
  int stride = 4;
  int grid_w = 0;
  int grid_h = 0;
  int descriptor_dim = 0;
  std::vector<float> detector_logits;
  std::vector<float> descriptors;

  /// Allocates a zero-filled map with grid dims derived from source and stride.
  static DenseFeatureMap allocate(int source_w, int source_h, int stride, int descriptor_dim);

  std::size_t cell_count() const { return static_cast<std::size_t>(grid_w) * grid_h; }
  std::size_t cell_index(int gx, int gy) const {
    return static_cast<std::size_t>(gy) * grid_w + gx;
  }
  float vessel_logit(int gx, int gy) const { return detector_logits[2 * cell_index(gx, gy)]; }
  float background_logit(int gx, int gy) const {
    return detector_logits[2 * cell_index(gx, gy) + 1];
  }
  std::span<const float> descriptor(int gx, int gy) const {
    return {descriptors.data() + cell_index(gx, gy) * descriptor_dim,
            static_cast<std::size_t>(descriptor_dim)};
  }
  std::span<float> descriptor(int gx, int gy) {
    return {descriptors.data() + cell_index(gx, gy) * descriptor_dim,
            static_cast<std::size_t>(descriptor_dim)};
  }

  /// Throws FormatError when dimensions, lengths or values are inconsistent.
  void validate() const;

  friend bool operator==(const DenseFeatureMap&, const DenseFeatureMap&) = default;
};

int grid_extent(int source, int stride);

/// Inverts OCT, OCTA and FA so vessels are dark, and replicates grayscale
/// input to three channels.
ImageBuffer preprocess_image(const ImageBuffer& img, Modality modality);

struct ReferenceExtractorConfig {
  int stride = 4;
  /// orientation_bins * spatial_bins^2; spatial bins must divide the window.
  int descriptor_dim = 128;
  int orientation_bins = 8;
  int window = 32;
  std::vector<double> ridge_scales{1.0, 2.0, 4.0};
  double tensor_sigma = 1.0;       // gradient scale for the structure tensor
  double integration_sigma = 2.0;  // window of the structure tensor
  double contrast_sigma = 8.0;     // local contrast normalization scale
  double logit_gain = 4.0;
  /// Relative junction response at which the vessel logit crosses zero.
  double response_threshold = 0.1;
};

/// Deterministic hand-crafted backend: multi-scale ridge strength, a
/// structure-tensor corner measure on the ridge map for the detector, and
/// gradient-orientation histograms for the descriptors.
DenseFeatureMap reference_extract(const ImageBuffer& img,
                                  const ReferenceExtractorConfig& cfg = {});

/// Full-resolution junction response used by reference_extract. Exposed for
/// inspection and tests.
std::vector<float> junction_response(const ImageBuffer& gray, const ReferenceExtractorConfig& cfg);

// Binary interchange format ("DFMP", version 1, little-endian).
inline constexpr char kFeatureMapMagic[4] = {'D', 'F', 'M', 'P'};
inline constexpr std::uint8_t kFeatureMapVersion = 1;

std::vector<std::uint8_t> encode_feature_map(const DenseFeatureMap& fm);
DenseFeatureMap decode_feature_map(std::span<const std::uint8_t> bytes);
void save_feature_map(const DenseFeatureMap& fm, const std::string& path);
DenseFeatureMap load_feature_map(const std::string& path);

}  // namespace retinareg
