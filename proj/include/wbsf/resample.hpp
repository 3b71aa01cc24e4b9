#pragma once

#include <optional>

#include "wbsf/raster.hpp"

namespace wbsf {

/// Bilinear interpolation of the four enclosing pixels at continuous
/// coordinate (x, y); coordinates outside the image clamp to the border.
/// Writes channels() values into out.
template <typename Scalar>
void bilinear_sample(const RasterT<Scalar>& r, double x, double y, Scalar* out) {
  const int w = r.width(), h = r.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 > w - 2) x0 = std::max(0, w - 2);
  if (y0 > h - 2) y0 = std::max(0, h - 2);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  for (int c = 0; c < r.channels(); ++c) {
    const double v00 = r(x0, y0, c), v10 = r(x1, y0, c);
    const double v01 = r(x0, y1, c), v11 = r(x1, y1, c);
    out[c] = static_cast<Scalar>((1 - fy) * ((1 - fx) * v00 + fx * v10) +
                                 fy * ((1 - fx) * v01 + fx * v11));
  }
}

inline float bilinear_sample1(const Raster& r, double x, double y) {
  float v;
  bilinear_sample(r, x, y, &v);
  return v;
}

inline Eigen::Vector3f bilinear_sample3(const Raster& r, double x, double y) {
  Eigen::Vector3f v;
  bilinear_sample(r, x, y, v.data());
  return v;
}

/// Flow sample that respects the invalid sentinel: nullopt when any of the
/// contributing taps is unknown.
std::optional<Eigen::Vector2f> sample_flow(const FlowField& f, double x, double y);

/// Area-average pooling over factor x factor blocks (dimensions floored).
/// Flow-flagged rasters additionally divide values by the factor.
Raster downsample(const Raster& r, int factor, bool is_flow = false);

/// Sentinel-aware flow downsampling: block mean over valid members, scaled by
/// 1/factor; blocks with no valid member become invalid.
FlowField downsample(const FlowField& f, int factor);

/// Separable Gaussian blur, clamp-to-edge borders, kernel radius ceil(3*sigma).
template <typename Scalar>
RasterT<Scalar> gaussian_blur(const RasterT<Scalar>& r, double sigma);

/// Bilinear resize to the given dimensions.
template <typename Scalar>
RasterT<Scalar> resize_bilinear(const RasterT<Scalar>& r, int new_width, int new_height);

/// Pyramid-style resize: Gaussian pre-smoothing matched to the scale change,
/// then bilinear resampling. No-op smoothing when upscaling.
template <typename Scalar>
RasterT<Scalar> resize_area(const RasterT<Scalar>& r, int new_width, int new_height);

}  // namespace wbsf
