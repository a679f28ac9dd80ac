#include "retinareg/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "retinareg/error.hpp"

namespace retinareg {
namespace {

constexpr double kInvertibleTol = 1e-12;
constexpr double kInfinityTol = 1e-12;
constexpr double kScaleTol = 1e-12;
constexpr double kAmbiguityRatio = 0.999;
constexpr double kRankTol = 1e-10;

Eigen::Matrix3d canonicalize(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kDegenerateConfiguration, "homography has non-finite entries");
  }
  const double fro = m.norm();
  if (fro == 0.0) {
    throw Error(ErrorCode::kDegenerateConfiguration, "zero homography");
  }
  Eigen::Matrix3d out;
  if (m(2, 2) != 0.0 && std::abs(m(2, 2)) > 1e-14 * fro) {
    out = m / m(2, 2);
  } else {
    out = m / fro;
    // Fix the sign on the largest-magnitude entry so the fallback is canonical.
    Eigen::Index r = 0, c = 0;
    out.cwiseAbs().maxCoeff(&r, &c);
    if (out(r, c) < 0.0) out = -out;
  }
  return out;
}

struct Normalization {
  Eigen::Matrix3d t;
  std::vector<Eigen::Vector2d> pts;
};

// Translate centroid to the origin and scale the mean distance to sqrt(2).
Normalization hartley_normalize(std::span<const Correspondence> pairs, bool source) {
  const std::size_t n = pairs.size();
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& c : pairs) {
    const Point2& p = source ? c.source : c.target;
    centroid += Eigen::Vector2d(p.x, p.y);
  }
  centroid /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (const auto& c : pairs) {
    const Point2& p = source ? c.source : c.target;
    mean_dist += (Eigen::Vector2d(p.x, p.y) - centroid).norm();
  }
  mean_dist /= static_cast<double>(n);
  if (mean_dist < kScaleTol) {
    throw Error(ErrorCode::kDegenerateConfiguration, "all points coincide");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Normalization out;
  out.t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  out.pts.reserve(n);
  for (const auto& c : pairs) {
    const Point2& p = source ? c.source : c.target;
    out.pts.emplace_back(s * (p.x - centroid.x()), s * (p.y - centroid.y()));
  }
  return out;
}

bool has_collinear_triple(const std::vector<Eigen::Vector2d>& p) {
  // Normalized coordinates have mean distance sqrt(2), so an absolute area
  // tolerance is scale-free here.
  constexpr double kAreaTol = 1e-9;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j)
      for (std::size_t k = j + 1; k < p.size(); ++k) {
        const Eigen::Vector2d u = p[j] - p[i];
        const Eigen::Vector2d v = p[k] - p[i];
        if (std::abs(u.x() * v.y() - u.y() * v.x()) < kAreaTol) return true;
      }
  return false;
}

}  // namespace

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Homography::Homography() : h_(Eigen::Matrix3d::Identity()) {}

Homography Homography::from_matrix(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d c = canonicalize(m);
  if (std::abs(c.determinant()) <= kInvertibleTol) {
    throw Error(ErrorCode::kDegenerateConfiguration, "homography is not invertible");
  }
  return Homography(c);
}

Homography Homography::translation(double tx, double ty) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = tx;
  m(1, 2) = ty;
  return Homography(m);
}

Homography Homography::inverse() const { return from_matrix(h_.inverse()); }

Homography operator*(const Homography& a, const Homography& b) {
  return Homography::from_matrix(a.h_ * b.h_);
}

Point2 Homography::apply(const Point2& p) const {
  const double x = h_(0, 0) * p.x + h_(0, 1) * p.y + h_(0, 2);
  const double y = h_(1, 0) * p.x + h_(1, 1) * p.y + h_(1, 2);
  const double w = h_(2, 0) * p.x + h_(2, 1) * p.y + h_(2, 2);
  if (std::abs(w) < kInfinityTol) {
    throw Error(ErrorCode::kDegeneratePoint, "point maps to infinity");
  }
  return {x / w, y / w};
}

bool Homography::approx_equal(const Homography& other, double tol) const {
  return (h_ - other.h_).cwiseAbs().maxCoeff() <= tol;
}

std::vector<Point2> apply_homography(const Homography& h, std::span<const Point2> pts) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(h.apply(p));
  return out;
}

Homography estimate_homography_dlt(std::span<const Correspondence> pairs) {
  const std::size_t n = pairs.size();
  if (n < 4) {
    throw Error(ErrorCode::kInsufficientPoints,
                "need at least 4 correspondences, got " + std::to_string(n));
  }
  for (const auto& c : pairs) {
    if (!std::isfinite(c.source.x) || !std::isfinite(c.source.y) ||
        !std::isfinite(c.target.x) || !std::isfinite(c.target.y)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite correspondence");
    }
  }
  const Normalization src = hartley_normalize(pairs, true);
  const Normalization dst = hartley_normalize(pairs, false);
  if (n == 4 && (has_collinear_triple(src.pts) || has_collinear_triple(dst.pts))) {
    throw Error(ErrorCode::kDegenerateConfiguration, "three of four points are collinear");
  }

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = src.pts[i].x(), y = src.pts[i].y();
    const double u = dst.pts[i].x(), v = dst.pts[i].y();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  Eigen::Matrix<double, 9, 1> sigma = Eigen::Matrix<double, 9, 1>::Zero();
  sigma.head(svd.singularValues().size()) = svd.singularValues();
  if (sigma(7) <= kRankTol * sigma(0) || sigma(8) > kAmbiguityRatio * sigma(7)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "null space of the DLT system is ambiguous");
  }
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography::from_matrix(dst.t.inverse() * hn * src.t);
}

Homography ground_truth_homography(std::span<const Correspondence> control_points) {
  if (control_points.size() != 6) {
    throw Error(ErrorCode::kWrongCount,
                "expected 6 control points, got " + std::to_string(control_points.size()));
  }
  return estimate_homography_dlt(control_points);
}

std::array<Point2, 4> image_corners(double width, double height) {
  return {Point2{0.0, 0.0}, Point2{width - 1.0, 0.0}, Point2{width - 1.0, height - 1.0},
          Point2{0.0, height - 1.0}};
}

double corner_transfer_error(const Homography& a, const Homography& b, double width,
                             double height) {
  double sum = 0.0;
  for (const auto& c : image_corners(width, height)) sum += distance(a.apply(c), b.apply(c));
  return sum / 4.0;
}

double triangle_area2(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

std::string format_homography(const Homography& h) {
  std::string out;
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", h(r, c));
      out += buf;
      out += (c == 2) ? '\n' : ' ';
    }
  }
  return out;
}

Homography parse_homography(const std::string& text) {
  std::istringstream in(text);
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (!(in >> m(r, c))) {
        throw Error(ErrorCode::kFormatError, "homography text needs 9 numbers");
      }
    }
  }
  std::string extra;
  if (in >> extra) throw Error(ErrorCode::kFormatError, "trailing data after homography");
  return Homography::from_matrix(m);
}

void write_homography(const Homography& h, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path + " for writing");
  out << format_homography(h);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path);
}

Homography read_homography(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_homography(ss.str());
}

}  // namespace retinareg
