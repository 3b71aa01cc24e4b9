#include <doctest.h>

#include <Eigen/Dense>

#include "test_support.hpp"
#include "wbsf/matcher.hpp"
#include "wbsf/resample.hpp"

using namespace wbsf;

TEST_CASE("colour cost") {
  ColourTransform id;
  CHECK(colour_cost({0.2, 0.4, 0.8}, {0.2, 0.4, 0.8}, id, 5.0) == doctest::Approx(0.0));
  CHECK(colour_cost({1, 0, 0}, {0, 0, 0}, id, 10.0) == doctest::Approx(10.0));
  const double base = colour_cost({0.3, 0.1, 0.9}, {0.5, 0.2, 0.1}, id, 1.0);
  CHECK(colour_cost({0.3, 0.1, 0.9}, {0.5, 0.2, 0.1}, id, 7.0) ==
        doctest::Approx(7.0 * base));
}

TEST_CASE("pairwise cost") {
  CHECK(pairwise_cost_flow({3, 4}, {3, 4}, 1.0, 50.0) == 0.0);
  CHECK(pairwise_cost({0, 0}, {100, 0}, {0, 0}, {0, 0}, 1.0, 50.0) ==
        doctest::Approx(50.0));
  CHECK(pairwise_cost_flow({1, 1}, {0, 0}, 0.01, 50.0) == doctest::Approx(0.02));

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector2d a(rng.uniform(-99, 99), rng.uniform(-99, 99));
    const Eigen::Vector2d b(rng.uniform(-99, 99), rng.uniform(-99, 99));
    const double tau = rng.uniform(0.1, 60);
    const double w = rng.uniform(0, 2);
    const double v = pairwise_cost_flow(a, b, w, tau);
    CHECK(v <= tau);
    CHECK(v == pairwise_cost_flow(b, a, w, tau));  // symmetry
  }
}

TEST_CASE("unary cost: identical images, term isolation, compositional sum") {
  const Raster img = test::textured_image(32, 32, 9);
  const DaisyParams daisy = DaisyParams::stereo_preset();
  const OrientationPyramid pyr = build_orientation_pyramid(img, daisy);
  Rng rng(10);
  const StereoRigFrame rig = test::random_rig(rng, 32, 32);

  MatchCostContext ctx(img, img, pyr, pyr, rig.F, daisy);

  SUBCASE("identical images at y = x with identity transform cost 0") {
    MatchWeights w{1, 1, 0, 0.01, 50};  // no epipolar: y = x is not on the line
    ctx.set_weights(w);
    CHECK(ctx.unary(10, 12, {10, 12}) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("weights (0, w_c, 0) reduce to the colour term") {
    MatchWeights w{0, 3.5, 0, 0.01, 50};
    ctx.set_weights(w);
    const Eigen::Vector2d y{14.3, 9.7};
    const Eigen::Vector3d c1(img(10, 12, 0), img(10, 12, 1), img(10, 12, 2));
    const Eigen::Vector3d c2 = bilinear_sample3(img, y.x(), y.y()).cast<double>();
    CHECK(ctx.unary(10, 12, y) ==
          doctest::Approx(colour_cost(c1, c2, ColourTransform{}, 3.5)).epsilon(1e-12));
  }

  SUBCASE("unary equals the sum of its three terms") {
    MatchWeights w{1.5, 2.5, 3.5, 0.01, 50};
    ctx.set_weights(w);
    for (int i = 0; i < 20; ++i) {
      const int x1 = rng.uniform_int(0, 31), y1 = rng.uniform_int(0, 31);
      const Eigen::Vector2d y{rng.uniform(0, 31), rng.uniform(0, 31)};
      const double sum = ctx.descriptor_term(x1, y1, y) + ctx.colour_term(x1, y1, y) +
                         ctx.epipolar_term(x1, y1, y);
      CHECK(ctx.unary(x1, y1, y) == doctest::Approx(sum).epsilon(1e-9));
      CHECK(ctx.unary(x1, y1, y) >= 0.0);
      CHECK(ctx.descriptor_term(x1, y1, y) >= 0.0);
      CHECK(ctx.colour_term(x1, y1, y) >= 0.0);
      CHECK(ctx.epipolar_term(x1, y1, y) >= 0.0);
    }
  }
}

namespace {

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> spanning_pairs(
    Rng& rng, const Eigen::Matrix3d& A, const Eigen::Vector3d& a, int n) {
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d c1(rng.uniform(), rng.uniform(), rng.uniform());
    pairs.emplace_back(c1, A * c1 + a);
  }
  return pairs;
}

}  // namespace

TEST_CASE("colour transform estimation") {
  Rng rng(20);

  SUBCASE("recovers a known affine map") {
    Eigen::Matrix3d A;
    A << 1.2, 0.05, -0.1, 0.0, 0.85, 0.1, 0.02, -0.03, 1.1;
    const Eigen::Vector3d a(0.05, -0.04, 0.02);
    const auto pairs = spanning_pairs(rng, A, a, 500);
    const ColourTransform T = estimate_colour_transform(pairs);
    CHECK((T.A - A).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((T.a - a).cwiseAbs().maxCoeff() < 1e-3);
  }

  SUBCASE("identity data yields the identity (regulariser tie-break)") {
    const auto pairs =
        spanning_pairs(rng, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), 200);
    const ColourTransform T = estimate_colour_transform(pairs);
    CHECK((T.A - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(T.a.cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("degenerate constant input stays finite; pseudo-inverse oracle") {
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> pairs;
    const Eigen::Vector3d c1(0.4, 0.4, 0.4), c2(0.6, 0.5, 0.7);
    for (int i = 0; i < 50; ++i) pairs.emplace_back(c1, c2);
    const ColourTransform T = estimate_colour_transform(pairs);
    CHECK(T.A.allFinite());
    CHECK(T.a.allFinite());

    // Oracle: dense Tikhonov least squares via SVD on the stacked system.
    const double rho = 1e-4 * pairs.size();
    Eigen::MatrixXd M(pairs.size() + 4, 4);
    Eigen::MatrixXd rhs(pairs.size() + 4, 3);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      M.row(i) << pairs[i].first.transpose(), 1.0;
      rhs.row(i) = pairs[i].second.transpose();
    }
    const double sq = std::sqrt(rho);
    M.bottomRows(4) = sq * Eigen::Matrix4d::Identity();
    rhs.bottomRows(4) = sq * Eigen::Matrix<double, 4, 3>::Identity();
    const Eigen::MatrixXd sol =
        M.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);
    CHECK((T.A - sol.topRows(3).transpose()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((T.a - sol.row(3).transpose()).cwiseAbs().maxCoeff() < 1e-8);

    // The fit never does worse than the identity transform.
    double res_fit = 0, res_id = 0;
    for (const auto& [p, q] : pairs) {
      res_fit += (T.A * p + T.a - q).squaredNorm();
      res_id += (p - q).squaredNorm();
    }
    CHECK(res_fit <= res_id + 1e-12);
  }

  SUBCASE("exact scale equivariance at rho = 0") {
    Eigen::Matrix3d A;
    A << 1.1, 0.0, 0.1, 0.05, 0.9, 0.0, 0.0, 0.1, 1.0;
    const Eigen::Vector3d a(0.02, 0.03, -0.01);
    const auto pairs = spanning_pairs(rng, A, a, 100);
    const ColourTransform T1 = estimate_colour_transform(pairs, 0.0);
    auto scaled = pairs;
    for (auto& [p, q] : scaled) q *= 2.5;
    const ColourTransform T2 = estimate_colour_transform(scaled, 0.0);
    CHECK((T2.A - 2.5 * T1.A).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((T2.a - 2.5 * T1.a).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("fewer than 4 pairs is an error") {
    std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> three(3);
    CHECK_THROWS(estimate_colour_transform(three));
  }
}

TEST_CASE("pass schedules match the published constants") {
  const PassSchedule stereo = stereo_pass_schedule();
  REQUIRE(stereo.size() == 4);
  const double wp[4] = {0.01, 0.02, 0.1, 1.0};
  for (int i = 0; i < 4; ++i) {
    CHECK(stereo[i].weights.w_d == 1.0);
    CHECK(stereo[i].weights.w_c == (i == 0 ? 1.0 : 10.0));
    CHECK(stereo[i].weights.w_e == 1.0);
    CHECK(stereo[i].weights.w_p == wp[i]);
    CHECK(stereo[i].weights.tau_p == 50.0);
    CHECK(stereo[i].pmbp_iterations == 2);
    CHECK(stereo[i].refit_colour_transform);
  }

  const PassSchedule flow = flow_pass_schedule();
  REQUIRE(flow.size() == 2);
  CHECK(flow[0].pmbp_iterations == 6);
  CHECK(flow[1].pmbp_iterations == 4);
  for (const auto& pass : flow) {
    CHECK(pass.weights.w_d == 1.0);
    CHECK(pass.weights.w_c == 20.0);
    CHECK(pass.weights.w_e == 0.0);
    CHECK(pass.weights.w_p == 0.01);
    CHECK(pass.weights.tau_p == 50.0);
  }
  CHECK(flow[0].cache_descriptors);
  CHECK_FALSE(flow[1].cache_descriptors);
}

TEST_CASE("pmbp: identical images with zero init stay at zero flow, energy 0") {
  const Raster img = test::textured_image(24, 24, 31);
  const DaisyParams daisy = DaisyParams::flow_preset();
  const OrientationPyramid pyr = build_orientation_pyramid(img, daisy);
  MatchParams params;
  params.seed = 5;
  const FlowField zero(24, 24, {0.f, 0.f});
  const PmbpResult res = pmbp_optimize(img, img, pyr, pyr, std::nullopt,
                                       flow_pass_schedule(), params, zero);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) {
      CHECK(res.flow.flow(x, y).x() == 0.f);
      CHECK(res.flow.flow(x, y).y() == 0.f);
    }
  for (double e : res.energy_trace) CHECK(e == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pmbp: recovers a synthetic translation and decreases energy") {
  const int n = 64, shift = 3;
  const Raster img1 = test::textured_image(n, n, 17);
  Raster img2(n, n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      for (int c = 0; c < 3; ++c) img2(x, y, c) = img1.at_clamped(x - shift, y, c);

  const DaisyParams daisy = DaisyParams::flow_preset();
  const OrientationPyramid pyr1 = build_orientation_pyramid(img1, daisy);
  const OrientationPyramid pyr2 = build_orientation_pyramid(img2, daisy);
  MatchParams params;
  params.seed = 99;
  const PmbpResult res = pmbp_optimize(img1, img2, pyr1, pyr2, std::nullopt,
                                       flow_pass_schedule(), params);

  int good = 0, interior = 0;
  for (int y = 8; y < n - 8; ++y)
    for (int x = 8; x < n - 8; ++x) {
      ++interior;
      const Eigen::Vector2f u = res.flow.flow(x, y);
      if ((u - Eigen::Vector2f(shift, 0)).norm() <= 1.f) ++good;
    }
  CHECK(static_cast<double>(good) / interior >= 0.95);
  REQUIRE(res.energy_trace.size() == 2);
  CHECK(res.energy_trace.back() <= res.energy_trace.front());
}

TEST_CASE("pmbp: fixed seed is bit-reproducible; state invariants hold") {
  const int n = 32;
  const Raster img1 = test::textured_image(n, n, 41);
  const Raster img2 = test::textured_image(n, n, 42);
  const DaisyParams daisy = DaisyParams::flow_preset();
  const OrientationPyramid pyr1 = build_orientation_pyramid(img1, daisy);
  const OrientationPyramid pyr2 = build_orientation_pyramid(img2, daisy);
  MatchParams params;
  params.seed = 7;

  const PmbpResult a = pmbp_optimize(img1, img2, pyr1, pyr2, std::nullopt,
                                     flow_pass_schedule(), params);
  const PmbpResult b = pmbp_optimize(img1, img2, pyr1, pyr2, std::nullopt,
                                     flow_pass_schedule(), params);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      CHECK(a.flow.flow(x, y).x() == b.flow.flow(x, y).x());
      CHECK(a.flow.flow(x, y).y() == b.flow.flow(x, y).y());
    }
  REQUIRE(a.energy_trace.size() == b.energy_trace.size());
  for (std::size_t i = 0; i < a.energy_trace.size(); ++i)
    CHECK(a.energy_trace[i] == b.energy_trace[i]);

  // Output = minimum-belief particle, and cached unaries re-evaluate.
  MatchCostContext ctx(img1, img2, pyr1, pyr2, std::nullopt, daisy);
  ctx.set_weights(flow_pass_schedule().back().weights);
  const ParticleField& field = a.particles;
  for (int y = 0; y < n; y += 5)
    for (int x = 0; x < n; x += 5) {
      const int best = field.best_slot(x, y);
      for (int k = 0; k < field.particle_count(); ++k)
        CHECK(field.belief(x, y, best) <= field.belief(x, y, k));
      const Eigen::Vector2f u = field.particle(x, y, best);
      const double re = ctx.unary(x, y, Eigen::Vector2d(x + u.x(), y + u.y()));
      CHECK(field.unary(x, y, best) == doctest::Approx(re).epsilon(1e-6));
    }
}

TEST_CASE("match_bidirectional: identical pair gives near-zero flows and identity fit") {
  const int n = 40;
  const Raster img = test::textured_image(n, n, 55);
  MatchParams params;
  params.seed = 3;
  const BidirectionalMatch m =
      match_bidirectional(MatchKind::Flow, img, img, std::nullopt, params);
  int zero_fwd = 0, zero_bwd = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (m.forward.flow(x, y).norm() < 0.75f) ++zero_fwd;
      if (m.backward.flow(x, y).norm() < 0.75f) ++zero_bwd;
    }
  CHECK(zero_fwd >= n * n * 95 / 100);
  CHECK(zero_bwd >= n * n * 95 / 100);
  CHECK((m.transform.A - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 0.05);
  CHECK(m.transform.a.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("match_bidirectional: stereo requires F") {
  const Raster img = test::textured_image(16, 16, 3);
  MatchParams params;
  CHECK_THROWS(match_bidirectional(MatchKind::Stereo, img, img, std::nullopt, params));
}
