#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "retinareg/geometry.hpp"
#include "retinareg/image.hpp"
#include "retinareg/losses.hpp"
#include "retinareg/toy_embedder.hpp"

namespace retinareg {

// ---------------------------------------------------------------------------
// Annotations

struct AnnotatedKeypoint {
  Point2 pos;
  PatchClass cls = PatchClass::kVessel;
};

/// Correspondence between keypoints of this image and of `other`:
/// index_map entries are (index here, index in other).
struct PairLink {
  std::string other;
  std::vector<std::pair<std::size_t, std::size_t>> index_map;
};

struct AnnotationSet {
  std::string image;
  Modality modality = Modality::kSynthA;
  std::string acquisition;
  std::string split;  // optional; "test" requires 6 control points
  std::optional<int> width;
  std::optional<int> height;
  std::vector<AnnotatedKeypoint> keypoints;
  std::vector<Point2> control_points;
  std::vector<PairLink> links;
};

/// Parses and validates one annotation document. Throws SchemaError
/// (missing field, wrong arity) and BoundsError (coordinates outside the
/// image, negative coordinates always).
AnnotationSet parse_annotations(const std::string& json_text);
AnnotationSet load_annotations(const std::string& path);
std::string annotations_to_json(const AnnotationSet& a);
void save_annotations(const AnnotationSet& a, const std::string& path);

/// Control points of a linked pair, index-aligned. Throws SchemaError when
/// the two lists differ in length.
CorrespondenceSet control_point_pairs(const AnnotationSet& a, const AnnotationSet& b);

// ---------------------------------------------------------------------------
// Patches and augmentation

struct PatchSample {
  std::vector<float> pixels;  // kPatchSize x kPatchSize x 3, (y, x, c) order
  PatchClass cls = PatchClass::kVessel;
  Modality modality = Modality::kSynthA;
  std::string source_id;
  Point2 center;
};

/// 32x32 window around the rounded centre (centre pixel at index 16),
/// edge-replicated. Grayscale input is replicated to three channels.
PatchSample extract_patch(const ImageBuffer& img, const Point2& center,
                          PatchClass cls = PatchClass::kVessel,
                          Modality modality = Modality::kSynthA, std::string source_id = {});

ImageBuffer patch_image(const PatchSample& p);

struct AugmentConfig {
  bool jitter = true;
  double contrast_min = 0.8;
  double contrast_max = 1.25;
  double brightness = 0.1;  // additive jitter drawn from [-b, b]
  double flip_probability = 0.5;
  /// Forces a flip regardless of the random draw when set.
  std::optional<bool> force_hflip;
  std::optional<bool> force_vflip;
};

/// Colour jitter (clamped to [0, 1]) and independent horizontal/vertical flips.
ImageBuffer augment_single(const ImageBuffer& img, std::uint64_t seed,
                           const AugmentConfig& cfg = {});
PatchSample augment_single(const PatchSample& patch, std::uint64_t seed,
                           const AugmentConfig& cfg = {});

/// Rotation about the image centre, isotropic scale, then a crop window.
struct SimilarityCrop {
  double rotation_deg = 0.0;
  double scale = 1.0;
  int crop_x = 0;
  int crop_y = 0;
  int crop_w = 0;  // 0 keeps the full width
  int crop_h = 0;
};

/// Matrix mapping input pixel coordinates to output (cropped) coordinates.
Homography similarity_crop_transform(const SimilarityCrop& t, int width, int height);

/// Resamples `img` under `t` (bilinear, edge replication).
ImageBuffer apply_similarity_crop(const ImageBuffer& img, const SimilarityCrop& t);

struct PairAugmentConfig {
  double rotation_min_deg = -15.0;
  double rotation_max_deg = 15.0;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double crop_fraction = 0.9;  // crop size relative to the image
};

struct PairAugmentation {
  ImageBuffer image_a;
  ImageBuffer image_b;
  CorrespondenceSet keypoints;       // surviving pairs, transformed
  std::vector<std::size_t> kept;     // indices into the input correspondences
  Homography transform_a;            // input A -> output A
  Homography transform_b;
};

/// Draws an independent similarity + crop per side and moves the keypoints
/// with exactly the same transforms; pairs leaving either crop are dropped.
/// Throws AllPointsCropped.
PairAugmentation augment_pair(const ImageBuffer& img_a, const ImageBuffer& img_b,
                              const CorrespondenceSet& kps, std::uint64_t seed,
                              const PairAugmentConfig& cfg = {});

// ---------------------------------------------------------------------------
// Training pools

struct TrainingPools {
  std::vector<PatchSample> detector;
  StratifiedPool strata;  // indices into `detector`
  std::vector<std::pair<PatchSample, PatchSample>> descriptor;
  std::vector<std::string> warnings;
};

/// Annotated images keyed by AnnotationSet::image; images are expected
/// preprocessed (3 channels). Background patches are drawn uniformly at
/// distance > 16 px from every annotated vessel keypoint, as many per image
/// as it has vessel keypoints. Positive pairs come from every link.
TrainingPools build_training_pools(const std::vector<AnnotationSet>& annotations,
                                   const std::map<std::string, ImageBuffer>& images,
                                   std::uint64_t seed);

/// Splits pools into training and validation tensors.
ToyDataset to_toy_dataset(const TrainingPools& pools, double val_fraction, std::uint64_t seed);

Eigen::VectorXd patch_vector(const PatchSample& p);

}  // namespace retinareg
