#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "wbsf/daisy.hpp"
#include "wbsf/resample.hpp"

using namespace wbsf;

TEST_CASE("constant image: zero maps and zero descriptor") {
  Raster img(16, 16, 1, 0.5f);
  const DaisyParams p = DaisyParams::stereo_preset();
  const OrientationPyramid pyr = build_orientation_pyramid(img, p);
  for (int s = 0; s <= p.rings; ++s)
    for (int o = 0; o < p.orientations; ++o) {
      const Raster& m = pyr.map(s, o);
      for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.f);
    }
  const Eigen::VectorXf d = daisy_descriptor(pyr, {8, 8}, 0.0, p);
  CHECK(d.norm() == 0.f);  // zero blocks stay zero under normalisation
}

TEST_CASE("horizontal step edge excites only positive-x orientations") {
  Raster img(20, 20, 1, 0.f);
  for (int y = 0; y < 20; ++y)
    for (int x = 10; x < 20; ++x) img(x, y) = 1.f;
  DaisyParams p;
  p.orientations = 8;
  const OrientationPyramid pyr = build_orientation_pyramid(img, p);
  for (int o = 0; o < p.orientations; ++o) {
    const double c = std::cos(2.0 * M_PI * o / p.orientations);
    float total = 0.f;
    const Raster& m = pyr.map(0, o);
    for (std::size_t i = 0; i < m.size(); ++i) total += m.data()[i];
    if (c > 1e-9)
      CHECK(total > 0.f);
    else
      CHECK(total <= 1e-9f);  // gradient is purely +x; rectification kills the rest
  }
}

TEST_CASE("layer smoothing preserves map mass away from borders") {
  // Centred blob: the Gaussian never reaches the border, so mass is conserved.
  Raster img(64, 64, 1, 0.f);
  for (int y = 28; y < 36; ++y)
    for (int x = 28; x < 36; ++x)
      img(x, y) = 1.f - 0.1f * static_cast<float>((x + y) % 3);
  DaisyParams p = DaisyParams::stereo_preset();  // sigma up to 5 px
  const OrientationPyramid pyr = build_orientation_pyramid(img, p);
  for (int o = 0; o < p.orientations; ++o) {
    double mass0 = 0.0, massQ = 0.0;
    const Raster& a = pyr.map(0, o);
    const Raster& b = pyr.map(p.rings, o);
    for (std::size_t i = 0; i < a.size(); ++i) {
      mass0 += a.data()[i];
      massQ += b.data()[i];
    }
    if (mass0 > 0.0) CHECK(std::abs(massQ - mass0) <= 0.01 * mass0);
  }
}

TEST_CASE("stereo preset descriptor length is 136") {
  CHECK(DaisyParams::stereo_preset().descriptor_length() == 136);
  CHECK(DaisyParams::flow_preset().descriptor_length() == 200);
}

TEST_CASE("orientation is 2*pi periodic") {
  const Raster img = test::textured_image(40, 40, 77);
  const DaisyParams p = DaisyParams::stereo_preset();
  const OrientationPyramid pyr = build_orientation_pyramid(img, p);
  const Eigen::VectorXf a = daisy_descriptor(pyr, {20.3, 19.1}, 0.0, p);
  const Eigen::VectorXf b = daisy_descriptor(pyr, {20.3, 19.1}, 2.0 * M_PI, p);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("descriptor translation equivariance for integer shifts") {
  const int shift = 3;
  const int n = 96;
  const Raster img = test::textured_image(n, n, 5);
  Raster shifted(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) shifted(x, y, c) = img.at_clamped(x - shift, y, c);

  const DaisyParams p = DaisyParams::stereo_preset();
  const OrientationPyramid pyr_a = build_orientation_pyramid(img, p);
  const OrientationPyramid pyr_b = build_orientation_pyramid(shifted, p);
  // Interior point: descriptor + blur support stays clear of both borders.
  const Eigen::Vector2d x(48, 50);
  const Eigen::VectorXf da = daisy_descriptor(pyr_a, x, 0.0, p);
  const Eigen::VectorXf db =
      daisy_descriptor(pyr_b, x + Eigen::Vector2d(shift, 0), 0.0, p);
  CHECK((da - db).norm() < 1e-4f * std::max(1.f, da.norm()));
}

TEST_CASE("per-histogram normalisation cancels global brightness scaling") {
  const Raster img = test::textured_image(40, 40, 8);
  Raster scaled = img;
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled.data()[i] *= 0.37f;

  const DaisyParams p = DaisyParams::flow_preset();
  const OrientationPyramid pyr_a = build_orientation_pyramid(img, p);
  const OrientationPyramid pyr_b = build_orientation_pyramid(scaled, p);
  const Eigen::VectorXf da = daisy_descriptor(pyr_a, {20.5, 20.5}, 0.3, p);
  const Eigen::VectorXf db = daisy_descriptor(pyr_b, {20.5, 20.5}, 0.3, p);
  CHECK((da - db).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("descriptor cost") {
  Eigen::VectorXf d1 = Eigen::VectorXf::Zero(8), d2 = Eigen::VectorXf::Zero(8);
  CHECK(descriptor_cost(d1, d2, 1.0) == 0.0);
  d1[0] = 1.f;
  d2[1] = 1.f;
  CHECK(descriptor_cost(d1, d2, 1.0) == doctest::Approx(2.0));
  CHECK(descriptor_cost(d1, d2, 3.0) == doctest::Approx(3.0 * descriptor_cost(d1, d2, 1.0)));
  CHECK(descriptor_cost(d1, d2, 1.0) == descriptor_cost(d2, d1, 1.0));
  Eigen::VectorXf d3 = Eigen::VectorXf::Zero(9);
  CHECK_THROWS(descriptor_cost(d1, d3, 1.0));
}
