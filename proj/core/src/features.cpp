#include <algorithm>
#include <cmath>
#include <numbers>

#include "filters.hpp"
#include "retinareg/error.hpp"
#include "retinareg/features.hpp"
#include "retinareg/parallel.hpp"

namespace retinareg {

using detail::Plane;

namespace {

constexpr int kMinExtractSize = 64;
constexpr float kRidgeScaleFloor = 1e-3f;
constexpr float kCornerScaleFloor = 1e-8f;
constexpr double kResponseQuantile = 0.995;
constexpr float kContrastEps = 0.02f;
constexpr double kZeroDescriptorNorm = 1e-5;
constexpr float kDescriptorClamp = 0.2f;
// Below this (in contrast-normalized units) a gradient is rounding noise.
constexpr double kMinGradient = 1e-3;

Plane gray_plane(const ImageBuffer& img) {
  const ImageBuffer g = to_gray(img);
  Plane p(g.width(), g.height());
  p.v.assign(g.data().begin(), g.data().end());
  return p;
}

// Ridge strength of either polarity: scale-normalized difference between the
// large and small Hessian eigenvalue magnitudes, maximised over scales.
Plane ridge_strength(const Plane& gray, const std::vector<double>& scales) {
  Plane out(gray.width, gray.height, 0.0f);
  for (double sigma : scales) {
    const Plane s = detail::gaussian_blur(gray, sigma);
    const float norm = static_cast<float>(sigma * sigma);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const float c = s(x, y);
        const float ixx = s.clamped(x + 1, y) - 2.0f * c + s.clamped(x - 1, y);
        const float iyy = s.clamped(x, y + 1) - 2.0f * c + s.clamped(x, y - 1);
        const float ixy = 0.25f * (s.clamped(x + 1, y + 1) - s.clamped(x - 1, y + 1) -
                                   s.clamped(x + 1, y - 1) + s.clamped(x - 1, y - 1));
        const float half_tr = 0.5f * (ixx + iyy);
        const float disc = std::sqrt(0.25f * (ixx - iyy) * (ixx - iyy) + ixy * ixy);
        const float l1 = std::abs(half_tr + disc);
        const float l2 = std::abs(half_tr - disc);
        const float r = norm * (std::max(l1, l2) - std::min(l1, l2));
        out(x, y) = std::max(out(x, y), r);
      }
    }
  }
  return out;
}

// Smaller eigenvalue of the structure tensor (Shi-Tomasi measure).
Plane corner_measure(const Plane& map, double grad_sigma, double integration_sigma) {
  const Plane s = detail::gaussian_blur(map, grad_sigma);
  Plane jxx(s.width, s.height), jyy(s.width, s.height), jxy(s.width, s.height);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const float gx = 0.5f * (s.clamped(x + 1, y) - s.clamped(x - 1, y));
      const float gy = 0.5f * (s.clamped(x, y + 1) - s.clamped(x, y - 1));
      jxx(x, y) = gx * gx;
      jyy(x, y) = gy * gy;
      jxy(x, y) = gx * gy;
    }
  }
  jxx = detail::gaussian_blur(jxx, integration_sigma);
  jyy = detail::gaussian_blur(jyy, integration_sigma);
  jxy = detail::gaussian_blur(jxy, integration_sigma);
  Plane out(s.width, s.height);
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    const float a = jxx.v[i], b = jyy.v[i], c = jxy.v[i];
    const float lmin = 0.5f * (a + b) - std::sqrt(0.25f * (a - b) * (a - b) + c * c);
    out.v[i] = std::max(0.0f, lmin);
  }
  return out;
}

void scale_by_quantile(Plane& p, float floor) {
  const float s = std::max(detail::quantile(p, kResponseQuantile), floor);
  for (auto& v : p.v) v /= s;
}

// Integral images of soft-binned, polarity-free gradient orientations over a
// padded, edge-replicated copy of the contrast-normalized image.
struct OrientationIntegrals {
  int pad = 0;
  int width = 0;   // padded width + 1
  int height = 0;  // padded height + 1
  int bins = 0;
  std::vector<double> sums;  // bins planes of width * height

  double box(int bin, int x0, int y0, int x1, int y1) const {
    // [x0, x1) x [y0, y1) in unpadded coordinates.
    const auto at = [&](int x, int y) {
      return sums[(static_cast<std::size_t>(bin) * height + (y + pad)) * width + (x + pad)];
    };
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  }
};

OrientationIntegrals orientation_integrals(const Plane& gray, const ReferenceExtractorConfig& cfg) {
  const Plane mean = detail::gaussian_blur(gray, cfg.contrast_sigma);
  Plane sq(gray.width, gray.height);
  for (std::size_t i = 0; i < sq.v.size(); ++i) {
    const float d = gray.v[i] - mean.v[i];
    sq.v[i] = d * d;
  }
  const Plane var = detail::gaussian_blur(sq, cfg.contrast_sigma);
  Plane normed(gray.width, gray.height);
  for (std::size_t i = 0; i < normed.v.size(); ++i) {
    normed.v[i] = (gray.v[i] - mean.v[i]) / std::sqrt(var.v[i] + kContrastEps * kContrastEps);
  }

  const int pad = cfg.window;
  Plane padded(gray.width + 2 * pad, gray.height + 2 * pad);
  for (int y = 0; y < padded.height; ++y)
    for (int x = 0; x < padded.width; ++x) padded(x, y) = normed.clamped(x - pad, y - pad);
  padded = detail::gaussian_blur(padded, 1.0);

  OrientationIntegrals out;
  out.pad = pad;
  out.width = padded.width + 1;
  out.height = padded.height + 1;
  out.bins = cfg.orientation_bins;
  out.sums.assign(static_cast<std::size_t>(out.bins) * out.width * out.height, 0.0);
  const double bin_width = std::numbers::pi / out.bins;
  std::vector<double> row(static_cast<std::size_t>(out.bins) * padded.width);
  for (int y = 0; y < padded.height; ++y) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int x = 0; x < padded.width; ++x) {
      const double gx = 0.5 * (padded.clamped(x + 1, y) - padded.clamped(x - 1, y));
      const double gy = 0.5 * (padded.clamped(x, y + 1) - padded.clamped(x, y - 1));
      const double mag = std::hypot(gx, gy);
      if (mag < kMinGradient) continue;
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      const double pos = theta / bin_width - 0.5;
      const double fl = std::floor(pos);
      const double frac = pos - fl;
      const int b0 = ((static_cast<int>(fl) % out.bins) + out.bins) % out.bins;
      const int b1 = (b0 + 1) % out.bins;
      row[static_cast<std::size_t>(b0) * padded.width + x] += mag * (1.0 - frac);
      row[static_cast<std::size_t>(b1) * padded.width + x] += mag * frac;
    }
    for (int b = 0; b < out.bins; ++b) {
      double run = 0.0;
      double* dst = &out.sums[(static_cast<std::size_t>(b) * out.height + (y + 1)) * out.width];
      const double* above = dst - out.width;
      for (int x = 0; x < padded.width; ++x) {
        run += row[static_cast<std::size_t>(b) * padded.width + x];
        dst[x + 1] = above[x + 1] + run;
      }
    }
  }
  return out;
}

int spatial_bins(const ReferenceExtractorConfig& cfg) {
  if (cfg.orientation_bins < 1 || cfg.descriptor_dim % cfg.orientation_bins != 0) {
    throw Error(ErrorCode::kConfigError, "descriptor_dim must be a multiple of orientation_bins");
  }
  const int cells = cfg.descriptor_dim / cfg.orientation_bins;
  const int sb = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cells))));
  if (sb * sb != cells || sb < 1 || cfg.window % sb != 0) {
    throw Error(ErrorCode::kConfigError,
                "descriptor_dim / orientation_bins must be a square whose root divides window");
  }
  return sb;
}

}  // namespace

ImageBuffer preprocess_image(const ImageBuffer& img, Modality modality) {
  const bool invert = is_inverted_modality(modality);
  ImageBuffer out(img.width(), img.height(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = img.at(x, y, img.channels() == 1 ? 0 : c);
        out.at(x, y, c) = invert ? 1.0f - v : v;
      }
    }
  }
  return out;
}

std::vector<float> junction_response(const ImageBuffer& img, const ReferenceExtractorConfig& cfg) {
  const Plane gray = gray_plane(img);
  Plane ridge = ridge_strength(gray, cfg.ridge_scales);
  scale_by_quantile(ridge, kRidgeScaleFloor);
  Plane corner = corner_measure(ridge, cfg.tensor_sigma, cfg.integration_sigma);
  scale_by_quantile(corner, kCornerScaleFloor);
  return corner.v;
}

DenseFeatureMap reference_extract(const ImageBuffer& img, const ReferenceExtractorConfig& cfg) {
  if (std::min(img.width(), img.height()) < kMinExtractSize) {
    throw Error(ErrorCode::kImageTooSmall, "reference extraction needs at least 64x64 pixels");
  }
  if (cfg.stride < 1 || cfg.window < 2) {
    throw Error(ErrorCode::kConfigError, "stride and window must be positive");
  }
  const int sb = spatial_bins(cfg);
  DenseFeatureMap fm =
      DenseFeatureMap::allocate(img.width(), img.height(), cfg.stride, cfg.descriptor_dim);

  const Plane gray = gray_plane(img);
  const std::vector<float> response = junction_response(img, cfg);
  const OrientationIntegrals integrals = orientation_integrals(gray, cfg);

  const int bin_px = cfg.window / sb;
  parallel_for(static_cast<std::size_t>(fm.grid_h), [&](std::size_t row) {
    const int gy = static_cast<int>(row);
    std::vector<double> desc(static_cast<std::size_t>(cfg.descriptor_dim));
    for (int gx = 0; gx < fm.grid_w; ++gx) {
      // Detector: mean junction response over the cell's pixel block.
      const int x0 = gx * cfg.stride, y0 = gy * cfg.stride;
      const int x1 = std::min(x0 + cfg.stride, img.width());
      const int y1 = std::min(y0 + cfg.stride, img.height());
      double acc = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) acc += response[static_cast<std::size_t>(y) * img.width() + x];
      const double r = acc / ((x1 - x0) * (y1 - y0));
      const float vessel = static_cast<float>(cfg.logit_gain * (r - cfg.response_threshold));
      const std::size_t cell = fm.cell_index(gx, gy);
      fm.detector_logits[2 * cell] = vessel;
      fm.detector_logits[2 * cell + 1] = -vessel;

      // Descriptor: orientation histograms over a window centred on the cell.
      const double cx = gx * cfg.stride + 0.5 * (cfg.stride - 1);
      const double cy = gy * cfg.stride + 0.5 * (cfg.stride - 1);
      const int wx0 = static_cast<int>(std::floor(cx - 0.5 * cfg.window + 0.5));
      const int wy0 = static_cast<int>(std::floor(cy - 0.5 * cfg.window + 0.5));
      double norm2 = 0.0;
      for (int by = 0; by < sb; ++by) {
        for (int bx = 0; bx < sb; ++bx) {
          const int bx0 = wx0 + bx * bin_px, by0 = wy0 + by * bin_px;
          for (int o = 0; o < cfg.orientation_bins; ++o) {
            const double v = integrals.box(o, bx0, by0, bx0 + bin_px, by0 + bin_px);
            desc[(static_cast<std::size_t>(by) * sb + bx) * cfg.orientation_bins + o] = v;
            norm2 += v * v;
          }
        }
      }
      auto out = fm.descriptor(gx, gy);
      if (std::sqrt(norm2) <= kZeroDescriptorNorm) {
        std::fill(out.begin(), out.end(), 0.0f);
        continue;
      }
      double inv = 1.0 / std::sqrt(norm2);
      norm2 = 0.0;
      for (auto& v : desc) {
        v = std::min(v * inv, static_cast<double>(kDescriptorClamp));
        norm2 += v * v;
      }
      inv = 1.0 / std::sqrt(norm2);
      for (std::size_t i = 0; i < desc.size(); ++i) out[i] = static_cast<float>(desc[i] * inv);
    }
  });
  return fm;
}

}  // namespace retinareg
