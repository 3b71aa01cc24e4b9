#include <doctest.h>

#include <fstream>

#include <Eigen/Dense>

#include "test_support.hpp"
#include "wbsf/geometry.hpp"

using namespace wbsf;

namespace {

// Horizontal epipolar lines (rectified rig).
Eigen::Matrix3d rectified_F() {
  Eigen::Matrix3d F;
  F << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  return F;
}

Eigen::Vector3d random_point_in_front(Rng& rng) {
  return {rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0), rng.uniform(2.0, 6.0)};
}

}  // namespace

TEST_CASE("sampson cost: worked example evaluates to 0.5") {
  const auto res = sampson_cost(rectified_F(), {10, 5}, {14, 6}, 1.0);
  CHECK_FALSE(res.degenerate);
  CHECK(res.cost == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sampson cost: zero on the epipolar line, zero weight, degenerate flag") {
  const Eigen::Matrix3d F = rectified_F();
  // y on the epipolar line of x: same row.
  CHECK(sampson_cost(F, {3, 7}, {100, 7}, 2.5).cost == doctest::Approx(0.0));
  CHECK(sampson_cost(F, {3, 7}, {9, 2}, 0.0).cost == 0.0);

  // Both points at the epipoles: rank-2 F with both epipoles at pixel (0,0).
  Eigen::Matrix3d G;
  G << 0, 1, 0, -1, 0, 0, 0, 0, 0;
  const auto res = sampson_cost(G, {0, 0}, {0, 0}, 1.0);
  CHECK(res.degenerate);
  CHECK(res.cost == 0.0);
  // Away from the epipoles the same F is fine.
  CHECK_FALSE(sampson_cost(G, {5, 1}, {2, 3}, 1.0).degenerate);
}

TEST_CASE("sampson cost: symmetry and F-scale invariance on random rigs") {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const StereoRigFrame rig = test::random_rig(rng);
    const Eigen::Vector2d x(rng.uniform(0, 640), rng.uniform(0, 480));
    const Eigen::Vector2d y(rng.uniform(0, 640), rng.uniform(0, 480));
    const double w = rng.uniform(0.1, 5.0);
    const double a = sampson_cost(rig.F, x, y, w).cost;
    const double b = sampson_cost(Eigen::Matrix3d(rig.F.transpose()), y, x, w).cost;
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
    const double s = rng.uniform(0.2, 40.0);
    const double c = sampson_cost(Eigen::Matrix3d(s * rig.F), x, y, w).cost;
    CHECK(c == doctest::Approx(a).epsilon(1e-9));
  }
}

TEST_CASE("epipolar direction: rectified rig gives (1,0); unit norm; epipole errors") {
  const Eigen::Matrix3d F = rectified_F();
  const Eigen::Vector2d d = epipolar_direction(F, {17, 4}, EpipolarSide::Image2);
  CHECK(d.x() == doctest::Approx(1.0));
  CHECK(d.y() == doctest::Approx(0.0));

  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const StereoRigFrame rig = test::random_rig(rng);
    const Eigen::Vector2d p(rng.uniform(0, 640), rng.uniform(0, 480));
    CHECK(epipolar_direction(rig.F, p, EpipolarSide::Image2).norm() ==
          doctest::Approx(1.0));
    CHECK(epipolar_direction(rig.F, p, EpipolarSide::Image1).norm() ==
          doctest::Approx(1.0));
  }

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  H(0, 2) = 1;  // line (F x) has zero first two components for any x
  Eigen::Matrix3d Ht = H;
  Ht(0, 2) = 0;
  Ht(2, 2) = 1;
  CHECK_THROWS(epipolar_direction(Ht, {0, 0}, EpipolarSide::Image2));
}

TEST_CASE("triangulation: projection oracle round trip") {
  Rng rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const StereoRigFrame rig = test::random_rig(rng);
    const Eigen::Vector3d X = random_point_in_front(rng);
    const Eigen::Vector2d x = project(rig.cam1.projection(), X);
    const Eigen::Vector2d y = project(rig.cam2.projection(), X);
    const Eigen::Vector3d back =
        triangulate_dlt(rig.cam1.projection(), rig.cam2.projection(), x, y);
    CHECK((back - X).norm() < 1e-6 * X.norm());
  }
}

TEST_CASE("triangulation: identical rays raise the degenerate error") {
  Rng rng(45);
  const StereoRigFrame rig = test::random_rig(rng);
  const Matrix34d P = rig.cam1.projection();
  CHECK_THROWS_AS(triangulate_dlt(P, P, {100, 100}, {100, 100}), std::domain_error);
}

TEST_CASE("triangulation: perturbation moves the result continuously") {
  Rng rng(46);
  const StereoRigFrame rig = test::random_rig(rng);
  const Eigen::Vector3d X = {0.2, -0.1, 3.0};
  const Eigen::Vector2d x = project(rig.cam1.projection(), X);
  const Eigen::Vector2d y = project(rig.cam2.projection(), X);
  const Eigen::Vector3d base =
      triangulate_dlt(rig.cam1.projection(), rig.cam2.projection(), x, y);
  double prev = 0.0;
  for (double delta : {1e-4, 1e-3, 1e-2}) {
    const Eigen::Vector3d moved = triangulate_dlt(
        rig.cam1.projection(), rig.cam2.projection(), x + Eigen::Vector2d(delta, 0), y);
    const double dist = (moved - base).norm();
    CHECK(dist < 0.05);       // bounded by the rig's conditioning
    CHECK(dist >= prev * 0.5);  // grows roughly with the perturbation
    prev = dist;
  }
}

TEST_CASE("fundamental from projections satisfies the epipolar constraint") {
  Rng rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    const StereoRigFrame rig = test::random_rig(rng);
    const Eigen::Matrix3d F =
        fundamental_from_projections(rig.cam1.projection(), rig.cam2.projection());
    const double scale = F.norm();
    for (int i = 0; i < 10; ++i) {
      const Eigen::Vector3d X = random_point_in_front(rng);
      const Eigen::Vector2d x = project(rig.cam1.projection(), X);
      const Eigen::Vector2d y = project(rig.cam2.projection(), X);
      CHECK(std::abs(y.homogeneous().dot(F * x.homogeneous())) <
            1e-6 * scale * x.homogeneous().norm() * y.homogeneous().norm());
    }
  }
}

TEST_CASE("calibration JSON: round trip, derived F, invariant checks") {
  test::TempDir dir("wbsf_calib");
  Rng rng(48);
  std::vector<StereoRigFrame> frames{test::random_rig(rng), test::random_rig(rng)};
  save_calibration(dir.file("calib.json"), frames);
  const auto back = load_calibration(dir.file("calib.json"));
  REQUIRE(back.size() == 2);
  CHECK((back[0].cam1.K - frames[0].cam1.K).norm() < 1e-9);
  CHECK((back[1].cam2.R - frames[1].cam2.R).norm() < 1e-9);
  CHECK((back[0].F - frames[0].F).norm() < 1e-9 * frames[0].F.norm());

  // File without F: it is derived and satisfies the constraint.
  {
    std::ofstream out(dir.file("nof.json"));
    out << R"({"frames":[{"cam1":{"K":[640,0,320,0,640,240,0,0,1],"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,0]},)"
        << R"("cam2":{"K":[640,0,320,0,640,240,0,0,1],"R":[1,0,0,0,1,0,0,0,1],"t":[-0.3,0,0]}}]})";
  }
  const auto derived = load_calibration(dir.file("nof.json"));
  REQUIRE(derived.size() == 1);
  const Eigen::Vector3d X(0.1, 0.2, 2.0);
  const Eigen::Vector2d x = project(derived[0].cam1.projection(), X);
  const Eigen::Vector2d y = project(derived[0].cam2.projection(), X);
  CHECK(std::abs(y.homogeneous().dot(derived[0].F * x.homogeneous())) <
        1e-6 * derived[0].F.norm());

  // det(R) = -1 must be rejected.
  {
    std::ofstream out(dir.file("flip.json"));
    out << R"({"frames":[{"cam1":{"K":[640,0,320,0,640,240,0,0,1],"R":[-1,0,0,0,1,0,0,0,1],"t":[0,0,0]},)"
        << R"("cam2":{"K":[640,0,320,0,640,240,0,0,1],"R":[1,0,0,0,1,0,0,0,1],"t":[-0.3,0,0]}}]})";
  }
  CHECK_THROWS(load_calibration(dir.file("flip.json")));

  // Schema violation.
  {
    std::ofstream out(dir.file("schema.json"));
    out << R"({"frames":[{"cam1":{"K":[1,2,3]}}]})";
  }
  CHECK_THROWS(load_calibration(dir.file("schema.json")));
}

TEST_CASE("epipolar orientations depend only on x and match the two line ops") {
  Rng rng(49);
  const StereoRigFrame rig = test::random_rig(rng);
  const Eigen::Vector2d x(200.5, 130.25);
  const auto [t1, t2] = epipolar_orientations(rig.F, x);
  const Eigen::Vector2d d2 = epipolar_direction(rig.F, x, EpipolarSide::Image2);
  CHECK(std::cos(t2) == doctest::Approx(d2.x()).epsilon(1e-9));
  CHECK(std::sin(t2) == doctest::Approx(d2.y()).epsilon(1e-9));

  // The image-1 angle equals the direction computed from any matching y.
  const Eigen::Vector3d X(0.0, 0.1, 3.5);
  const Eigen::Vector2d xp = project(rig.cam1.projection(), X);
  const Eigen::Vector2d yp = project(rig.cam2.projection(), X);
  const auto [s1, s2] = epipolar_orientations(rig.F, xp);
  const Eigen::Vector2d d1 = epipolar_direction(rig.F, yp, EpipolarSide::Image1);
  CHECK(std::abs(std::cos(s1) - d1.x()) < 1e-6);
  CHECK(std::abs(std::sin(s1) - d1.y()) < 1e-6);
}
