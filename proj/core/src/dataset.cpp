#include "retinareg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "retinareg/error.hpp"

namespace retinareg {
namespace {

constexpr double kBackgroundClearance = 16.0;
constexpr int kBackgroundAttempts = 200;

}  // namespace

PatchSample extract_patch(const ImageBuffer& img, const Point2& center, PatchClass cls,
                          Modality modality, std::string source_id) {
  PatchSample p;
  p.cls = cls;
  p.modality = modality;
  p.source_id = std::move(source_id);
  p.center = center;
  p.pixels.resize(kPatchValues);
  const int cx = static_cast<int>(std::lround(center.x));
  const int cy = static_cast<int>(std::lround(center.y));
  const int half = kPatchSize / 2;
  for (int y = 0; y < kPatchSize; ++y)
    for (int x = 0; x < kPatchSize; ++x)
      for (int c = 0; c < 3; ++c)
        p.pixels[(static_cast<std::size_t>(y) * kPatchSize + x) * 3 + c] =
            img.clamped(cx - half + x, cy - half + y, img.channels() == 1 ? 0 : c);
  return p;
}

ImageBuffer patch_image(const PatchSample& p) {
  return ImageBuffer(kPatchSize, kPatchSize, 3, p.pixels);
}

Eigen::VectorXd patch_vector(const PatchSample& p) {
  Eigen::VectorXd v(kPatchValues);
  for (int i = 0; i < kPatchValues; ++i) v(i) = p.pixels[i];
  return v;
}

ImageBuffer augment_single(const ImageBuffer& img, std::uint64_t seed, const AugmentConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> contrast(cfg.contrast_min, cfg.contrast_max);
  std::uniform_real_distribution<double> brightness(-cfg.brightness, cfg.brightness);
  std::bernoulli_distribution flip(cfg.flip_probability);
  const double alpha = contrast(rng);
  const double beta = brightness(rng);
  const bool hflip = cfg.force_hflip.value_or(flip(rng));
  const bool vflip = cfg.force_vflip.value_or(flip(rng));

  ImageBuffer out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const int sx = hflip ? img.width() - 1 - x : x;
      const int sy = vflip ? img.height() - 1 - y : y;
      for (int c = 0; c < img.channels(); ++c) {
        double v = img.at(sx, sy, c);
        if (cfg.jitter) v = std::clamp(alpha * v + beta, 0.0, 1.0);
        out.at(x, y, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

PatchSample augment_single(const PatchSample& patch, std::uint64_t seed, const AugmentConfig& cfg) {
  PatchSample out = patch;
  out.pixels = augment_single(patch_image(patch), seed, cfg).data();
  return out;
}

Homography similarity_crop_transform(const SimilarityCrop& t, int width, int height) {
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double th = t.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th) * t.scale, s = std::sin(th) * t.scale;
  Eigen::Matrix3d m;
  // p' = R s (p - centre) + centre - crop offset
  m << c, -s, cx - c * cx + s * cy - t.crop_x,
       s, c, cy - s * cx - c * cy - t.crop_y,
       0, 0, 1;
  return Homography::from_matrix(m);
}

ImageBuffer apply_similarity_crop(const ImageBuffer& img, const SimilarityCrop& t) {
  const int out_w = t.crop_w > 0 ? t.crop_w : img.width();
  const int out_h = t.crop_h > 0 ? t.crop_h : img.height();
  const Homography inv = similarity_crop_transform(t, img.width(), img.height()).inverse();
  ImageBuffer out(out_w, out_h, img.channels());
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      const int x0 = static_cast<int>(std::floor(src.x)), y0 = static_cast<int>(std::floor(src.y));
      const double fx = src.x - x0, fy = src.y - y0;
      for (int c = 0; c < img.channels(); ++c) {
        const double v = (1 - fx) * (1 - fy) * img.clamped(x0, y0, c) +
                         fx * (1 - fy) * img.clamped(x0 + 1, y0, c) +
                         (1 - fx) * fy * img.clamped(x0, y0 + 1, c) +
                         fx * fy * img.clamped(x0 + 1, y0 + 1, c);
        out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return out;
}

PairAugmentation augment_pair(const ImageBuffer& img_a, const ImageBuffer& img_b,
                              const CorrespondenceSet& kps, std::uint64_t seed,
                              const PairAugmentConfig& cfg) {
  std::mt19937_64 rng(seed);
  const auto draw = [&](const ImageBuffer& img) {
    std::uniform_real_distribution<double> rot(cfg.rotation_min_deg, cfg.rotation_max_deg);
    std::uniform_real_distribution<double> scale(cfg.scale_min, cfg.scale_max);
    SimilarityCrop t;
    t.rotation_deg = cfg.rotation_min_deg == cfg.rotation_max_deg ? cfg.rotation_min_deg : rot(rng);
    t.scale = cfg.scale_min == cfg.scale_max ? cfg.scale_min : scale(rng);
    t.crop_w = std::max(1, static_cast<int>(std::lround(cfg.crop_fraction * img.width())));
    t.crop_h = std::max(1, static_cast<int>(std::lround(cfg.crop_fraction * img.height())));
    std::uniform_int_distribution<int> ox(0, img.width() - t.crop_w);
    std::uniform_int_distribution<int> oy(0, img.height() - t.crop_h);
    t.crop_x = ox(rng);
    t.crop_y = oy(rng);
    return t;
  };
  const SimilarityCrop ta = draw(img_a);
  const SimilarityCrop tb = draw(img_b);

  PairAugmentation out;
  out.transform_a = similarity_crop_transform(ta, img_a.width(), img_a.height());
  out.transform_b = similarity_crop_transform(tb, img_b.width(), img_b.height());
  const auto inside = [](const Point2& p, const SimilarityCrop& t) {
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= t.crop_w - 1.0 && p.y <= t.crop_h - 1.0;
  };
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const Point2 a = out.transform_a.apply(kps[i].source);
    const Point2 b = out.transform_b.apply(kps[i].target);
    if (inside(a, ta) && inside(b, tb)) {
      out.keypoints.push_back({a, b});
      out.kept.push_back(i);
    }
  }
  if (out.keypoints.empty()) {
    throw Error(ErrorCode::kAllPointsCropped, "augmentation cropped every keypoint pair");
  }
  out.image_a = apply_similarity_crop(img_a, ta);
  out.image_b = apply_similarity_crop(img_b, tb);
  return out;
}

TrainingPools build_training_pools(const std::vector<AnnotationSet>& annotations,
                                   const std::map<std::string, ImageBuffer>& images,
                                   std::uint64_t seed) {
  TrainingPools pools;
  std::mt19937_64 rng(seed);
  std::map<std::string, const AnnotationSet*> by_id;
  for (const auto& a : annotations) by_id[a.image] = &a;

  const auto image_of = [&](const AnnotationSet& a) -> const ImageBuffer& {
    const auto it = images.find(a.image);
    if (it == images.end()) {
      throw Error(ErrorCode::kMissingAnnotation, "no image loaded for " + a.image);
    }
    return it->second;
  };
  const auto add_detector = [&](PatchSample p) {
    pools.strata[{p.cls, p.modality}].push_back(pools.detector.size());
    pools.detector.push_back(std::move(p));
  };

  for (const auto& a : annotations) {
    const ImageBuffer& img = image_of(a);
    std::vector<Point2> vessels;
    std::size_t background = 0;
    for (const auto& k : a.keypoints) {
      add_detector(extract_patch(img, k.pos, k.cls, a.modality, a.image));
      if (k.cls == PatchClass::kVessel) {
        vessels.push_back(k.pos);
      } else {
        ++background;
      }
    }
    std::uniform_real_distribution<double> ux(0.0, img.width() - 1.0), uy(0.0, img.height() - 1.0);
    for (std::size_t n = background; n < vessels.size(); ++n) {
      for (int attempt = 0; attempt < kBackgroundAttempts; ++attempt) {
        const Point2 p{std::round(ux(rng)), std::round(uy(rng))};
        const bool clear = std::all_of(vessels.begin(), vessels.end(), [&](const Point2& v) {
          return distance(p, v) > kBackgroundClearance;
        });
        if (clear) {
          add_detector(extract_patch(img, p, PatchClass::kBackground, a.modality, a.image));
          break;
        }
      }
    }
  }

  std::set<std::pair<std::string, std::string>> done;
  for (const auto& a : annotations) {
    if (a.links.empty()) continue;
    for (const auto& link : a.links) {
      const auto other_it = by_id.find(link.other);
      if (other_it == by_id.end()) {
        pools.warnings.push_back("MissingLink: " + a.image + " links to unknown image " + link.other);
        continue;
      }
      const auto key = std::minmax(a.image, link.other);
      if (!done.insert({key.first, key.second}).second) continue;
      const AnnotationSet& b = *other_it->second;
      const ImageBuffer& img_a = image_of(a);
      const ImageBuffer& img_b = image_of(b);
      for (const auto& [i, j] : link.index_map) {
        if (i >= a.keypoints.size() || j >= b.keypoints.size()) {
          throw Error(ErrorCode::kSchemaError, "link " + a.image + " -> " + b.image +
                                                   " refers to a missing keypoint (" +
                                                   std::to_string(i) + ", " + std::to_string(j) + ")");
        }
        pools.descriptor.emplace_back(
            extract_patch(img_a, a.keypoints[i].pos, a.keypoints[i].cls, a.modality, a.image),
            extract_patch(img_b, b.keypoints[j].pos, b.keypoints[j].cls, b.modality, b.image));
      }
    }
  }
  if (pools.descriptor.empty()) {
    pools.warnings.push_back("MissingLink: no linked keypoints, descriptor pool is empty");
  }
  return pools;
}

ToyDataset to_toy_dataset(const TrainingPools& pools, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError, "val_fraction must lie in [0, 1)");
  }
  std::mt19937_64 rng(seed);
  const auto split = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
    std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
    return std::make_pair(train, val);
  };

  ToyDataset d;
  const auto [det_train, det_val] = split(pools.detector.size());
  d.detector_patches.resize(kPatchValues, static_cast<Eigen::Index>(det_train.size()));
  for (std::size_t k = 0; k < det_train.size(); ++k) {
    const auto& p = pools.detector[det_train[k]];
    d.detector_patches.col(static_cast<Eigen::Index>(k)) = patch_vector(p);
    d.detector_labels.push_back(p.cls);
    d.detector_modalities.push_back(p.modality);
  }
  d.val_detector_patches.resize(kPatchValues, static_cast<Eigen::Index>(det_val.size()));
  for (std::size_t k = 0; k < det_val.size(); ++k) {
    const auto& p = pools.detector[det_val[k]];
    d.val_detector_patches.col(static_cast<Eigen::Index>(k)) = patch_vector(p);
    d.val_detector_labels.push_back(p.cls);
  }
  const auto [pair_train, pair_val] = split(pools.descriptor.size());
  const auto fill_pairs = [&](const std::vector<std::size_t>& ids, Eigen::MatrixXd& a,
                              Eigen::MatrixXd& b) {
    a.resize(kPatchValues, static_cast<Eigen::Index>(ids.size()));
    b.resize(kPatchValues, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      a.col(static_cast<Eigen::Index>(k)) = patch_vector(pools.descriptor[ids[k]].first);
      b.col(static_cast<Eigen::Index>(k)) = patch_vector(pools.descriptor[ids[k]].second);
    }
  };
  fill_pairs(pair_train, d.pair_a, d.pair_b);
  fill_pairs(pair_val, d.val_pair_a, d.val_pair_b);
  return d;
}

}  // namespace retinareg
