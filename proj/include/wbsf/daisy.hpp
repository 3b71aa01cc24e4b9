#pragma once

#include <vector>

#include "wbsf/raster.hpp"

namespace wbsf {

struct DaisyParams {
  enum class Normalization { PerHistogramL2, FullL2, None };

  float radius = 15.f;       // outermost ring radius, pixels
  int rings = 3;             // Q
  int points_per_ring = 8;   // T
  int orientations = 8;      // H
  Normalization normalization = Normalization::PerHistogramL2;

  int descriptor_length() const { return (1 + rings * points_per_ring) * orientations; }

  /// Small footprint used for stereo flow: two rings, radius 10 px.
  static DaisyParams stereo_preset() {
    DaisyParams p;
    p.radius = 10.f;
    p.rings = 2;
    return p;
  }
  static DaisyParams flow_preset() { return DaisyParams{}; }
};

/// Half-rectified directional gradient maps, Gaussian-smoothed at one scale
/// per ring plus the unsmoothed base layer. Layer s carries cumulative
/// sigma_s = 0.5 * radius * s / rings.
class OrientationPyramid {
 public:
  OrientationPyramid() = default;
  OrientationPyramid(int width, int height, DaisyParams params)
      : width_(width), height_(height), params_(params),
        maps_(static_cast<std::size_t>(params.rings + 1) * params.orientations) {}

  int width() const { return width_; }
  int height() const { return height_; }
  const DaisyParams& params() const { return params_; }

  Raster& map(int scale, int orientation) {
    return maps_[static_cast<std::size_t>(scale) * params_.orientations + orientation];
  }
  const Raster& map(int scale, int orientation) const {
    return maps_[static_cast<std::size_t>(scale) * params_.orientations + orientation];
  }

 private:
  int width_ = 0;
  int height_ = 0;
  DaisyParams params_;
  std::vector<Raster> maps_;
};

/// Builds the gradient-orientation pyramid of a 1- or 3-channel image
/// (colour converts to luma first).
OrientationPyramid build_orientation_pyramid(const Raster& image, const DaisyParams& p);

/// Samples the flower-shaped grid at x rotated by theta: the centre histogram
/// from layer 0 and T points per ring q at radius q*R/Q from layer q.
/// Rotation moves the sampling grid only; histogram bins are not re-binned.
Eigen::VectorXf daisy_descriptor(const OrientationPyramid& pyr,
                                 const Eigen::Vector2d& x, double theta,
                                 const DaisyParams& p);

/// w_d * ||d1 - d2||_2^2. Throws std::invalid_argument on length mismatch.
double descriptor_cost(const Eigen::VectorXf& d1, const Eigen::VectorXf& d2, double w_d);

}  // namespace wbsf
