#pragma once

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace retinareg {

/// Pixel coordinates, origin at the center of the top-left pixel.
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(const Point2& a, const Point2& b);

struct Correspondence {
  Point2 source;
  Point2 target;
};

using CorrespondenceSet = std::vector<Correspondence>;

/// 3x3 projective transform kept in canonical scale: h(2,2) = 1 when that
/// entry is non-zero, otherwise unit Frobenius norm.
class Homography {
 public:
  Homography();  // identity

  /// Normalizes `m` and checks invertibility; throws DegenerateConfiguration.
  static Homography from_matrix(const Eigen::Matrix3d& m);
  static Homography identity() { return Homography(); }
  static Homography translation(double tx, double ty);

  const Eigen::Matrix3d& matrix() const { return h_; }
  double operator()(int r, int c) const { return h_(r, c); }

  Homography inverse() const;
  /// (a * b)(p) = a(b(p)).
  friend Homography operator*(const Homography& a, const Homography& b);

  /// Throws DegeneratePoint when the point maps to infinity.
  Point2 apply(const Point2& p) const;

  bool approx_equal(const Homography& other, double tol = 1e-9) const;

 private:
  explicit Homography(const Eigen::Matrix3d& normalized) : h_(normalized) {}
  Eigen::Matrix3d h_;
};

std::vector<Point2> apply_homography(const Homography& h, std::span<const Point2> pts);

/// Normalized DLT. Exact for 4 pairs, algebraic least squares beyond.
Homography estimate_homography_dlt(std::span<const Correspondence> pairs);

/// DLT over exactly 6 annotated control-point pairs.
Homography ground_truth_homography(std::span<const Correspondence> control_points);

/// Mean distance between the four image corners mapped by `a` and by `b`.
double corner_transfer_error(const Homography& a, const Homography& b, double width,
                             double height);

std::array<Point2, 4> image_corners(double width, double height);

/// Twice the signed triangle area; used for collinearity tests.
double triangle_area2(const Point2& a, const Point2& b, const Point2& c);

// Text format: three rows of three whitespace-separated values, row-major.
std::string format_homography(const Homography& h);
Homography parse_homography(const std::string& text);
void write_homography(const Homography& h, const std::string& path);
Homography read_homography(const std::string& path);

}  // namespace retinareg
