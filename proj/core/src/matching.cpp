#include "retinareg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "retinareg/error.hpp"
#include "retinareg/parallel.hpp"

namespace retinareg {
namespace {

constexpr std::size_t kMatchRowBlock = 64;
constexpr std::size_t kRansacChunk = 64;
constexpr double kMinSampleArea = 1.0;  // px^2, triangle area

double squared_distance(std::span<const float> a, std::span<const float> b) {
  constexpr std::size_t kLanes = 8;
  float lanes[kLanes] = {};
  const std::size_t n = a.size();
  std::size_t k = 0;
  for (; k + kLanes <= n; k += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const float d = a[k + l] - b[k + l];
      lanes[l] += d * d;
    }
  }
  for (std::size_t l = 0; k < n; ++k, ++l) {
    const float d = a[k] - b[k];
    lanes[l] += d * d;
  }
  double sum = 0.0;
  for (float v : lanes) sum += v;
  return sum;
}

bool degenerate_sample(std::span<const Correspondence> pairs, const std::array<std::size_t, 4>& s) {
  for (int side = 0; side < 2; ++side) {
    const auto pt = [&](std::size_t i) -> const Point2& {
      return side == 0 ? pairs[s[i]].source : pairs[s[i]].target;
    };
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        for (int k = j + 1; k < 4; ++k)
          if (0.5 * std::abs(triangle_area2(pt(i), pt(j), pt(k))) < kMinSampleArea) return true;
  }
  return false;
}

struct Consensus {
  std::size_t inliers = 0;
  double mean_error = std::numeric_limits<double>::infinity();
};

Consensus score(const Homography& h, std::span<const Correspondence> pairs, double threshold,
                std::vector<bool>* mask) {
  Consensus c;
  double sum = 0.0;
  if (mask) mask->assign(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double err;
    try {
      err = distance(h.apply(pairs[i].source), pairs[i].target);
    } catch (const Error&) {
      continue;
    }
    if (err <= threshold) {
      ++c.inliers;
      sum += err;
      if (mask) (*mask)[i] = true;
    }
  }
  if (c.inliers > 0) c.mean_error = sum / static_cast<double>(c.inliers);
  return c;
}

bool better(const Consensus& a, const Consensus& b) {
  if (a.inliers != b.inliers) return a.inliers > b.inliers;
  return a.mean_error < b.mean_error;
}

}  // namespace

double descriptor_distance(std::span<const float> a, std::span<const float> b) {
  return std::sqrt(squared_distance(a, b));
}

std::vector<Match> mutual_nn_match(const DescriptorSet& a, const DescriptorSet& b) {
  if (a.size() == 0 || b.size() == 0) return {};
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "descriptor dimensions differ");
  const std::size_t na = a.size(), nb = b.size();
  const std::size_t blocks = (na + kMatchRowBlock - 1) / kMatchRowBlock;
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> best_b(na);
  std::vector<double> best_b_dist(na, kInf);
  std::vector<std::vector<std::size_t>> col_idx(blocks);
  std::vector<std::vector<double>> col_dist(blocks);

  parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t begin = blk * kMatchRowBlock;
    const std::size_t end = std::min(na, begin + kMatchRowBlock);
    auto& cidx = col_idx[blk];
    auto& cdist = col_dist[blk];
    cidx.assign(nb, 0);
    cdist.assign(nb, kInf);
    for (std::size_t i = begin; i < end; ++i) {
      const auto ra = a.row(i);
      for (std::size_t j = 0; j < nb; ++j) {
        const double d = squared_distance(ra, b.row(j));
        if (d < best_b_dist[i]) {
          best_b_dist[i] = d;
          best_b[i] = j;
        }
        if (d < cdist[j]) {
          cdist[j] = d;
          cidx[j] = i;
        }
      }
    }
  });

  std::vector<std::size_t> best_a(nb);
  std::vector<double> best_a_dist(nb, kInf);
  for (std::size_t blk = 0; blk < blocks; ++blk) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (col_dist[blk][j] < best_a_dist[j]) {
        best_a_dist[j] = col_dist[blk][j];
        best_a[j] = col_idx[blk][j];
      }
    }
  }

  std::vector<Match> out;
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = best_b[i];
    if (best_a[j] == i) out.push_back({i, j, std::sqrt(best_b_dist[i])});
  }
  std::sort(out.begin(), out.end(), [](const Match& x, const Match& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.idx_a != y.idx_a) return x.idx_a < y.idx_a;
    return x.idx_b < y.idx_b;
  });
  return out;
}

void RansacConfig::validate() const {
  if (!(reproj_threshold > 0.0)) throw Error(ErrorCode::kConfigError, "reproj_threshold must be > 0");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::kConfigError, "confidence must lie in (0, 1)");
  }
  if (max_iterations < 1) throw Error(ErrorCode::kConfigError, "max_iterations must be >= 1");
}

std::size_t RansacResult::inlier_count() const {
  return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

double ransac_required_iterations(double inlier_ratio, double confidence, std::size_t sample_size) {
  if (inlier_ratio >= 1.0) return 0.0;
  if (inlier_ratio <= 0.0) return std::numeric_limits<double>::infinity();
  const double p_good = std::pow(inlier_ratio, static_cast<double>(sample_size));
  const double denom = std::log1p(-p_good);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return std::log1p(-confidence) / denom;
}

RansacResult ransac_homography(std::span<const Correspondence> pairs, const RansacConfig& cfg) {
  cfg.validate();
  const std::size_t n = pairs.size();
  if (n < 4) {
    throw Error(ErrorCode::kInsufficientMatches,
                "RANSAC needs at least 4 correspondences, got " + std::to_string(n));
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  std::optional<Homography> best_model;
  Consensus best;
  std::size_t iterations = 0;
  std::vector<std::array<std::size_t, 4>> samples;
  std::vector<std::optional<Homography>> models;
  std::vector<Consensus> scores;

  while (iterations < cfg.max_iterations) {
    const std::size_t chunk = std::min(kRansacChunk, cfg.max_iterations - iterations);
    samples.resize(chunk);
    for (auto& s : samples) {
      for (std::size_t k = 0; k < 4; ++k) {
        std::size_t idx;
        do {
          idx = pick(rng);
        } while (std::find(s.begin(), s.begin() + k, idx) != s.begin() + k);
        s[k] = idx;
      }
    }
    models.assign(chunk, std::nullopt);
    scores.assign(chunk, Consensus{});
    parallel_for(chunk, [&](std::size_t c) {
      const auto& s = samples[c];
      if (degenerate_sample(pairs, s)) return;
      const std::array<Correspondence, 4> minimal{pairs[s[0]], pairs[s[1]], pairs[s[2]],
                                                  pairs[s[3]]};
      try {
        models[c] = estimate_homography_dlt(minimal);
      } catch (const Error&) {
        return;
      }
      scores[c] = score(*models[c], pairs, cfg.reproj_threshold, nullptr);
    });
    for (std::size_t c = 0; c < chunk; ++c) {
      if (models[c] && scores[c].inliers >= 4 && (!best_model || better(scores[c], best))) {
        best = scores[c];
        best_model = models[c];
      }
    }
    iterations += chunk;
    if (best_model) {
      const double w = static_cast<double>(best.inliers) / static_cast<double>(n);
      if (static_cast<double>(iterations) >= ransac_required_iterations(w, cfg.confidence)) break;
    }
  }
  if (!best_model) {
    throw Error(ErrorCode::kNoModel, "no sample reached 4 inliers");
  }

  RansacResult result;
  result.iterations = iterations;
  std::vector<bool> mask;
  score(*best_model, pairs, cfg.reproj_threshold, &mask);
  std::vector<Correspondence> inliers;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) inliers.push_back(pairs[i]);
  result.homography = *best_model;
  try {
    result.homography = estimate_homography_dlt(inliers);
  } catch (const Error&) {
    // Keep the minimal-sample model when the consensus set is degenerate.
  }
  score(result.homography, pairs, cfg.reproj_threshold, &result.inlier_mask);
  return result;
}

std::string_view to_string(RegistrationStatus s) {
  switch (s) {
    case RegistrationStatus::kOk: return "OK";
    case RegistrationStatus::kTooFewMatches: return "TooFewMatches";
    case RegistrationStatus::kRansacFailed: return "RansacFailed";
  }
  return "?";
}

std::size_t RegistrationResult::inlier_count() const {
  return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

RegistrationResult register_pair(const DenseFeatureMap& a, const DenseFeatureMap& b,
                                 const RegistrationConfig& cfg) {
  a.validate();
  b.validate();
  cfg.ransac.validate();
  RegistrationResult result;
  result.seed = cfg.ransac.seed;

  const auto heat_a = confidence_heatmap(a);
  const auto heat_b = confidence_heatmap(b);
  result.keypoints_a = extract_keypoints(heat_a, cfg.n_max, cfg.min_confidence, cfg.nms_radius);
  result.keypoints_b = extract_keypoints(heat_b, cfg.n_max, cfg.min_confidence, cfg.nms_radius);
  const DescriptorSet desc_a = sample_descriptors(a, result.keypoints_a);
  const DescriptorSet desc_b = sample_descriptors(b, result.keypoints_b);
  if (desc_a.size() > 0 && desc_b.size() > 0 && desc_a.dim() != desc_b.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature maps have different descriptor dims");
  }
  result.matches = mutual_nn_match(desc_a, desc_b);
  result.inlier_mask.assign(result.matches.size(), false);
  if (result.matches.size() < 4) {
    result.status = RegistrationStatus::kTooFewMatches;
    return result;
  }

  CorrespondenceSet pairs;
  pairs.reserve(result.matches.size());
  for (const auto& m : result.matches) {
    pairs.push_back({result.keypoints_a[m.idx_a].pos, result.keypoints_b[m.idx_b].pos});
  }
  try {
    RansacResult r = ransac_homography(pairs, cfg.ransac);
    result.homography = r.homography;
    result.inlier_mask = std::move(r.inlier_mask);
    result.ransac_iterations = r.iterations;
    result.status = RegistrationStatus::kOk;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInsufficientMatches) {
      result.status = RegistrationStatus::kTooFewMatches;
    } else if (e.code() == ErrorCode::kNoModel) {
      result.status = RegistrationStatus::kRansacFailed;
    } else {
      throw;
    }
  }
  return result;
}

}  // namespace retinareg
