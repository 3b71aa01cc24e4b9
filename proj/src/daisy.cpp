#include "wbsf/daisy.hpp"

#include <cmath>
#include <stdexcept>

#include "wbsf/resample.hpp"

namespace wbsf {

OrientationPyramid build_orientation_pyramid(const Raster& image, const DaisyParams& p) {
  if (image.width() < 2 || image.height() < 2)
    throw std::invalid_argument("pyramid needs at least a 2x2 image");
  const Raster gray = luma(image);
  const int w = gray.width(), h = gray.height();

  // Central-difference gradients, clamp-to-edge.
  Raster gx(w, h, 1), gy(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      gx(x, y) = 0.5f * (gray.at_clamped(x + 1, y) - gray.at_clamped(x - 1, y));
      gy(x, y) = 0.5f * (gray.at_clamped(x, y + 1) - gray.at_clamped(x, y - 1));
    }

  OrientationPyramid pyr(w, h, p);
  for (int o = 0; o < p.orientations; ++o) {
    const double angle = 2.0 * M_PI * o / p.orientations;
    const float cs = static_cast<float>(std::cos(angle));
    const float sn = static_cast<float>(std::sin(angle));
    Raster& base = pyr.map(0, o);
    base = Raster(w, h, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        base(x, y) = std::max(0.f, cs * gx(x, y) + sn * gy(x, y));
  }

  // Each ring layer adds incremental smoothing so the cumulative sigma of
  // layer s is 0.5 * R * s / Q.
  double prev_sigma = 0.0;
  for (int s = 1; s <= p.rings; ++s) {
    const double sigma = 0.5 * p.radius * s / p.rings;
    const double inc = std::sqrt(std::max(0.0, sigma * sigma - prev_sigma * prev_sigma));
    for (int o = 0; o < p.orientations; ++o)
      pyr.map(s, o) = gaussian_blur(pyr.map(s - 1, o), inc);
    prev_sigma = sigma;
  }
  return pyr;
}

Eigen::VectorXf daisy_descriptor(const OrientationPyramid& pyr,
                                 const Eigen::Vector2d& x, double theta,
                                 const DaisyParams& p) {
  Eigen::VectorXf desc(p.descriptor_length());
  const int H = p.orientations;

  auto sample_histogram = [&](int layer, const Eigen::Vector2d& pos, float* out) {
    for (int o = 0; o < H; ++o)
      out[o] = bilinear_sample1(pyr.map(layer, o), pos.x(), pos.y());
  };

  sample_histogram(0, x, desc.data());
  int block = 1;
  for (int q = 1; q <= p.rings; ++q) {
    const double radius = p.radius * q / p.rings;
    for (int j = 0; j < p.points_per_ring; ++j, ++block) {
      const double phi = theta + 2.0 * M_PI * j / p.points_per_ring;
      const Eigen::Vector2d pos =
          x + radius * Eigen::Vector2d(std::cos(phi), std::sin(phi));
      sample_histogram(q, pos, desc.data() + block * H);
    }
  }

  switch (p.normalization) {
    case DaisyParams::Normalization::PerHistogramL2:
      for (int b = 0; b < block; ++b) {
        auto seg = desc.segment(b * H, H);
        const float n = seg.norm();
        if (n > 1e-12f) seg /= n;  // all-zero blocks stay zero
      }
      break;
    case DaisyParams::Normalization::FullL2: {
      const float n = desc.norm();
      if (n > 1e-12f) desc /= n;
      break;
    }
    case DaisyParams::Normalization::None:
      break;
  }
  return desc;
}

double descriptor_cost(const Eigen::VectorXf& d1, const Eigen::VectorXf& d2, double w_d) {
  if (d1.size() != d2.size())
    throw std::invalid_argument("descriptor lengths differ");
  return w_d * static_cast<double>((d1 - d2).squaredNorm());
}

}  // namespace wbsf
