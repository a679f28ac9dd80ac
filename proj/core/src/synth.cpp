#include "retinareg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "filters.hpp"
#include "retinareg/error.hpp"

namespace retinareg {
namespace {

constexpr double kStep = 2.0;
constexpr double kCurvature = 0.06;  // heading random-walk step, radians
constexpr double kBucket = 16.0;
constexpr int kMaxAttempts = 20;

struct Piece {
  Point2 a, b;
  double width;
};

struct VesselScene {
  std::vector<Piece> pieces;
  std::vector<Point2> bifurcations;
};

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void grow(VesselScene& scene, std::mt19937_64& rng, const SynthConfig& cfg, Point2 start,
          double heading, double width, int depth) {
  const double length = uniform(rng, cfg.segment_length_min, cfg.segment_length_max);
  const int steps = std::max(1, static_cast<int>(length / kStep));
  std::normal_distribution<double> turn(0.0, kCurvature);
  Point2 p = start;
  for (int s = 0; s < steps; ++s) {
    heading += turn(rng);
    const Point2 q{p.x + kStep * std::cos(heading), p.y + kStep * std::sin(heading)};
    scene.pieces.push_back({p, q, width});
    p = q;
  }
  if (depth >= cfg.branch_depth || width * 0.7 < cfg.vessel_width_min) return;
  scene.bifurcations.push_back(p);
  const double spread_l = deg2rad(uniform(rng, cfg.branch_angle_min_deg, cfg.branch_angle_max_deg));
  const double spread_r = deg2rad(uniform(rng, cfg.branch_angle_min_deg, cfg.branch_angle_max_deg));
  grow(scene, rng, cfg, p, heading - spread_l, width * 0.85, depth + 1);
  grow(scene, rng, cfg, p, heading + spread_r, width * 0.7, depth + 1);
}

VesselScene make_scene(const SynthConfig& cfg, std::mt19937_64& rng) {
  VesselScene scene;
  const double cx = 0.5 * (cfg.width - 1), cy = 0.5 * (cfg.height - 1);
  for (int r = 0; r < cfg.roots; ++r) {
    // Roots enter from a ring around the image centre and head inwards.
    const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double rad = 0.5 * std::hypot(cfg.width, cfg.height) * uniform(rng, 0.6, 0.9);
    const Point2 start{cx + rad * std::cos(ang), cy + rad * std::sin(ang)};
    const double heading = ang + std::numbers::pi + uniform(rng, -0.5, 0.5);
    grow(scene, rng, cfg, start, heading, cfg.vessel_width_max, 0);
  }
  return scene;
}

// Uniform bucket grid over the scene pieces for nearest-vessel queries.
class SceneIndex {
 public:
  explicit SceneIndex(const VesselScene& scene) : scene_(scene) {
    min_x_ = min_y_ = std::numeric_limits<double>::infinity();
    double max_x = -min_x_, max_y = -min_y_;
    for (const auto& p : scene.pieces) {
      min_x_ = std::min({min_x_, p.a.x, p.b.x});
      min_y_ = std::min({min_y_, p.a.y, p.b.y});
      max_x = std::max({max_x, p.a.x, p.b.x});
      max_y = std::max({max_y, p.a.y, p.b.y});
    }
    min_x_ -= reach();
    min_y_ -= reach();
    nx_ = static_cast<int>((max_x + reach() - min_x_) / kBucket) + 1;
    ny_ = static_cast<int>((max_y + reach() - min_y_) / kBucket) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t i = 0; i < scene.pieces.size(); ++i) {
      const auto& p = scene.pieces[i];
      const double r = 1.5 * p.width;
      const int x0 = bucket(std::min(p.a.x, p.b.x) - r, min_x_, nx_);
      const int x1 = bucket(std::max(p.a.x, p.b.x) + r, min_x_, nx_);
      const int y0 = bucket(std::min(p.a.y, p.b.y) - r, min_y_, ny_);
      const int y1 = bucket(std::max(p.a.y, p.b.y) + r, min_y_, ny_);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) buckets_[static_cast<std::size_t>(y) * nx_ + x].push_back(i);
    }
  }

  /// Vessel coverage in [0, 1] at a world point: Gaussian cross-section
  /// with sigma = width / 2, maximised over pieces.
  double coverage(const Point2& w) const {
    const int bx = static_cast<int>(std::floor((w.x - min_x_) / kBucket));
    const int by = static_cast<int>(std::floor((w.y - min_y_) / kBucket));
    if (bx < 0 || by < 0 || bx >= nx_ || by >= ny_) return 0.0;
    double best = 0.0;
    for (std::size_t i : buckets_[static_cast<std::size_t>(by) * nx_ + bx]) {
      const auto& p = scene_.pieces[i];
      const double vx = p.b.x - p.a.x, vy = p.b.y - p.a.y;
      const double len2 = vx * vx + vy * vy;
      double t = len2 > 0 ? ((w.x - p.a.x) * vx + (w.y - p.a.y) * vy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double dx = w.x - (p.a.x + t * vx), dy = w.y - (p.a.y + t * vy);
      const double s = 0.5 * p.width;
      best = std::max(best, std::exp(-0.5 * (dx * dx + dy * dy) / (s * s)));
    }
    return best;
  }

 private:
  double reach() const { return 1.5 * 8.0 + kBucket; }
  static int bucket(double v, double origin, int n) {
    return std::clamp(static_cast<int>(std::floor((v - origin) / kBucket)), 0, n - 1);
  }

  const VesselScene& scene_;
  double min_x_, min_y_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
};

detail::Plane render(const SceneIndex& index, const SynthConfig& cfg, const Homography& out_to_world) {
  detail::Plane p(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const Point2 w = out_to_world.apply({static_cast<double>(x), static_cast<double>(y)});
      p(x, y) = static_cast<float>(cfg.background - cfg.vessel_contrast * index.coverage(w));
    }
  }
  return p;
}

ImageBuffer stylize(detail::Plane p, const SideStyle& style, std::uint64_t seed) {
  std::mt19937_64 rng(style.noise_seed.value_or(seed));
  const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double cx = 0.5 * (p.width - 1), cy = 0.5 * (p.height - 1);
  const double diag = std::hypot(p.width, p.height);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double v = p(x, y);
      if (style.gradient_amplitude != 0.0) {
        v += style.gradient_amplitude * ((x - cx) * std::cos(dir) + (y - cy) * std::sin(dir)) / diag;
      }
      v = std::clamp(v, 0.0, 1.0);
      if (style.gamma != 1.0) v = std::pow(v, style.gamma);
      p(x, y) = static_cast<float>(v);
    }
  }
  p = detail::gaussian_blur(p, style.blur_sigma);
  std::normal_distribution<double> noise(0.0, 1.0);
  ImageBuffer out(p.width, p.height, 1);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double v = p(x, y);
      if (style.noise_sigma > 0.0) v += style.noise_sigma * noise(rng);
      v = std::clamp(v, 0.0, 1.0);
      if (style.invert) v = 1.0 - v;
      out.at(x, y) = static_cast<float>(v);
    }
  }
  return out;
}

bool inside(const Point2& p, const SynthConfig& cfg, double margin) {
  return p.x >= margin && p.y >= margin && p.x <= cfg.width - 1 - margin &&
         p.y <= cfg.height - 1 - margin;
}

// Farthest-point selection starting from the point nearest the centre.
std::vector<std::size_t> spread_selection(const std::vector<Point2>& pts, std::size_t k,
                                          const Point2& centre) {
  std::vector<std::size_t> chosen;
  if (pts.size() < k) return chosen;
  std::size_t first = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (distance(pts[i], centre) < distance(pts[first], centre)) first = i;
  chosen.push_back(first);
  std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < k) {
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      nearest[i] = std::min(nearest[i], distance(pts[i], pts[chosen.back()]));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    if (best_d <= 0.0) return {};
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

void SynthConfig::validate() const {
  const auto bad = [](const char* what) { throw Error(ErrorCode::kConfigError, what); };
  if (width < 64 || height < 64) bad("synthetic images must be at least 64x64");
  if (roots < 1 || branch_depth < 1) bad("roots and branch_depth must be positive");
  if (!(segment_length_min > 0 && segment_length_max >= segment_length_min)) bad("segment length range");
  if (!(vessel_width_min > 0 && vessel_width_max >= vessel_width_min)) bad("vessel width range");
  if (!(branch_angle_min_deg > 0 && branch_angle_max_deg >= branch_angle_min_deg)) bad("branch angle range");
  if (!(scale_min > 0 && scale_max >= scale_min)) bad("scale range");
  if (max_rotation_deg < 0 || max_translation < 0 || max_perspective < 0) bad("negative homography magnitude");
  if (!(background > 0 && background <= 1 && vessel_contrast > 0 && vessel_contrast <= background)) {
    bad("background and vessel_contrast must satisfy 0 < contrast <= background <= 1");
  }
  for (const SideStyle* s : {&side_a, &side_b}) {
    if (!(s->gamma > 0) || s->blur_sigma < 0 || s->noise_sigma < 0 || s->gradient_amplitude < 0) {
      bad("side style parameters must be non-negative (gamma positive)");
    }
  }
}

Homography synth_homography(const SynthConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double th = deg2rad(uniform(rng, -cfg.max_rotation_deg, cfg.max_rotation_deg));
  const double s = uniform(rng, cfg.scale_min, cfg.scale_max);
  const double tx = uniform(rng, -cfg.max_translation, cfg.max_translation);
  const double ty = uniform(rng, -cfg.max_translation, cfg.max_translation);
  const double px = uniform(rng, -cfg.max_perspective, cfg.max_perspective);
  const double py = uniform(rng, -cfg.max_perspective, cfg.max_perspective);
  const double cx = 0.5 * (cfg.width - 1), cy = 0.5 * (cfg.height - 1);
  Eigen::Matrix3d to_centre, from_centre, rot, persp;
  to_centre << 1, 0, -cx, 0, 1, -cy, 0, 0, 1;
  from_centre << 1, 0, cx + tx, 0, 1, cy + ty, 0, 0, 1;
  rot << s * std::cos(th), -s * std::sin(th), 0, s * std::sin(th), s * std::cos(th), 0, 0, 0, 1;
  persp << 1, 0, 0, 0, 1, 0, px, py, 1;
  return Homography::from_matrix(from_centre * rot * persp * to_centre);
}

SynthPair synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Homography h = synth_homography(cfg, rng());
  const Homography h_inv = h.inverse();
  const Point2 centre{0.5 * (cfg.width - 1), 0.5 * (cfg.height - 1)};

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const VesselScene scene = make_scene(cfg, rng);
    SynthPair out;
    out.h_gt = h;
    std::vector<Point2> visible;
    for (const auto& b : scene.bifurcations) {
      if (!inside(b, cfg, cfg.border_margin)) continue;
      const Point2 q = h.apply(b);
      if (!inside(q, cfg, cfg.border_margin)) continue;
      visible.push_back(b);
      out.keypoints.push_back({b, q});
    }
    const auto chosen = spread_selection(visible, 6, centre);
    if (chosen.size() != 6) continue;
    for (std::size_t i : chosen) out.control_points.push_back(out.keypoints[i]);
    try {
      (void)ground_truth_homography(out.control_points);
    } catch (const Error&) {
      continue;
    }

    const SceneIndex index(scene);
    const std::uint64_t side_seed = rng();
    out.image_a = stylize(render(index, cfg, Homography::identity()), cfg.side_a, side_seed ^ 0xa);
    out.image_b = stylize(render(index, cfg, h_inv), cfg.side_b, side_seed ^ 0xb);
    return out;
  }
  throw Error(ErrorCode::kConfigError,
              "could not place 6 control points; enlarge the image or the vessel tree");
}

}  // namespace retinareg
