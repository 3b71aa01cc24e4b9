#include "wbsf/resample.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wbsf {

std::optional<Eigen::Vector2f> sample_flow(const FlowField& f, double x, double y) {
  const Raster& r = f.raster();
  const int w = r.width(), h = r.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), std::max(0, w - 2));
  const int y0 = std::min(static_cast<int>(std::floor(y)), std::max(0, h - 2));
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  if (!f.valid(x0, y0) || !f.valid(x1, y0) || !f.valid(x0, y1) || !f.valid(x1, y1))
    return std::nullopt;
  Eigen::Vector2f out;
  bilinear_sample(r, x, y, out.data());
  return out;
}

Raster downsample(const Raster& r, int factor, bool is_flow) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return r;
  const int ow = r.width() / factor;
  const int oh = r.height() / factor;
  if (ow < 1 || oh < 1)
    throw std::invalid_argument("downsample factor exceeds raster size");
  Raster out(ow, oh, r.channels());
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  const double flow_scale = is_flow ? 1.0 / factor : 1.0;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < r.channels(); ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += r(x * factor + dx, y * factor + dy, c);
        out(x, y, c) = static_cast<float>(acc * inv * flow_scale);
      }
  return out;
}

FlowField downsample(const FlowField& f, int factor) {
  if (factor < 1) throw std::invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return f;
  const int ow = f.width() / factor;
  const int oh = f.height() / factor;
  if (ow < 1 || oh < 1)
    throw std::invalid_argument("downsample factor exceeds field size");
  FlowField out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      Eigen::Vector2d acc(0, 0);
      int n = 0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const int sx = x * factor + dx, sy = y * factor + dy;
          if (!f.valid(sx, sy)) continue;
          acc += f.flow(sx, sy).cast<double>();
          ++n;
        }
      if (n == 0)
        out.set_invalid(x, y);
      else
        out.set_flow(x, y, (acc / (n * static_cast<double>(factor))).cast<float>());
    }
  return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

}  // namespace

template <typename Scalar>
RasterT<Scalar> gaussian_blur(const RasterT<Scalar>& r, double sigma) {
  if (sigma <= 0.0) return r;
  const auto k = gaussian_kernel(sigma);
  const int radius = (static_cast<int>(k.size()) - 1) / 2;
  const int w = r.width(), h = r.height(), ch = r.channels();
  RasterT<Scalar> tmp(w, h, ch), out(w, h, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * r.at_clamped(x + i, y, c);
        tmp(x, y, c) = static_cast<Scalar>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at_clamped(x, y + i, c);
        out(x, y, c) = static_cast<Scalar>(acc);
      }
  return out;
}

template <typename Scalar>
RasterT<Scalar> resize_bilinear(const RasterT<Scalar>& r, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1)
    throw std::invalid_argument("resize target must be >= 1");
  if (new_width == r.width() && new_height == r.height()) return r;
  RasterT<Scalar> out(new_width, new_height, r.channels());
  const double sx = new_width > 1 ? static_cast<double>(r.width() - 1) / (new_width - 1) : 0.0;
  const double sy = new_height > 1 ? static_cast<double>(r.height() - 1) / (new_height - 1) : 0.0;
  std::vector<Scalar> px(r.channels());
  for (int y = 0; y < new_height; ++y)
    for (int x = 0; x < new_width; ++x) {
      bilinear_sample(r, x * sx, y * sy, px.data());
      for (int c = 0; c < r.channels(); ++c) out(x, y, c) = px[c];
    }
  return out;
}

template <typename Scalar>
RasterT<Scalar> resize_area(const RasterT<Scalar>& r, int new_width, int new_height) {
  const double ratio = std::max(static_cast<double>(r.width()) / new_width,
                                static_cast<double>(r.height()) / new_height);
  RasterT<Scalar> src = r;
  if (ratio > 1.0) {
    // Matched anti-alias smoothing before decimation.
    const double sigma = 0.5 * std::sqrt(std::max(0.0, ratio * ratio - 1.0));
    if (sigma > 0.05) src = gaussian_blur(r, sigma);
  }
  return resize_bilinear(src, new_width, new_height);
}

template Raster gaussian_blur<float>(const Raster&, double);
template Rasterd gaussian_blur<double>(const Rasterd&, double);
template Raster resize_bilinear<float>(const Raster&, int, int);
template Rasterd resize_bilinear<double>(const Rasterd&, int, int);
template Raster resize_area<float>(const Raster&, int, int);
template Rasterd resize_area<double>(const Rasterd&, int, int);

}  // namespace wbsf
