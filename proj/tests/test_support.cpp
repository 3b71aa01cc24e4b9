#include "test_support.hpp"

#include <Eigen/Geometry>

#include "wbsf/resample.hpp"

namespace wbsf::test {

Raster textured_image(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Raster img = random_raster(w, h, 3, rng, 0.05f, 0.95f);
  return gaussian_blur(img, 1.0);
}

StereoRigFrame random_rig(Rng& rng, int width, int height) {
  StereoRigFrame rig;
  const double f = width * (1.0 + 0.4 * rng.uniform());
  rig.cam1.K << f, 0, width / 2.0, 0, f, height / 2.0, 0, 0, 1;
  rig.cam2.K = rig.cam1.K;

  // Camera 2: moderate baseline plus a small rotation about a random axis.
  const Eigen::Vector3d axis =
      Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
          .normalized();
  const double angle = rng.uniform(-0.08, 0.08);
  rig.cam2.R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  const Eigen::Vector3d center(0.3 + 0.2 * rng.uniform(), 0.1 * rng.uniform(),
                               0.05 * rng.uniform());
  rig.cam2.t = -rig.cam2.R * center;
  rig.F = fundamental_from_projections(rig.cam1.projection(), rig.cam2.projection());
  return rig;
}

}  // namespace wbsf::test
